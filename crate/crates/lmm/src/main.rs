use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lmm::exec::Override;
use lmm::{commands, experiments, render, validate, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lmm", version, about = "Inventory, pricing and recommendation decision experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the evaluation seed list with `count` seeds starting here.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: `experiment.out`, else `out`].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel experiment cells.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Which recommender-inventory decisions are learned.
    #[arg(long = "override", global = true, value_enum, default_value_t = Override::None)]
    variant: Override,
    /// Model checkpoint to run, extend or verify.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a checkpoint, the `[policy]` heuristic or a random policy.
    Simulate,
    /// Grid-tune the heuristics that apply to the environment.
    Tune,
    /// Train a PPO agent.
    TrainPpo,
    /// Build an offline trajectory dataset.
    Collect {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Fit a decision transformer to a dataset.
    TrainDt {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Four pricing scenarios against three heuristics and PPO.
    PricingGrid,
    /// Joint, IM-only, RS-only and naive recommender-inventory control.
    ImrsAblation,
    /// Decision transformer vs PPO vs heuristic on the collaborative env.
    CollabDt {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Collect the dataset first.
        #[arg(long)]
        collect: bool,
    },
    /// Run the oracle suite and verify checkpoints.
    Validate,
    /// Redraw SVG charts from the CSV tables in the output directory.
    Report,
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required for this subcommand".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out.clone().or_else(|| cfg.and_then(|c| c.experiment.out.clone())).unwrap_or_else(|| PathBuf::from("out"))
}

fn dataset_dir(given: &Option<PathBuf>, out: &Path) -> PathBuf {
    given.clone().unwrap_or_else(|| out.join("dataset"))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Validate => {
            validate::validate(cli.checkpoint.as_deref(), &out_dir(cli, None))?;
            return Ok(());
        }
        Command::Report => {
            for p in render::render_dir(&out_dir(cli, None))? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        _ => {}
    }
    let cfg = load_config(cli)?;
    let out = out_dir(cli, Some(&cfg));
    let ckpt = cli.checkpoint.as_deref();
    match &cli.command {
        Command::Simulate => {
            let trajs = commands::simulate(&cfg, &out, ckpt, cli.variant)?;
            let mean = trajs.iter().map(|t| t.total_return()).sum::<f64>() / trajs.len().max(1) as f64;
            println!("{} episodes, mean return {mean:.3}", trajs.len());
        }
        Command::Tune => {
            for (spec, mean) in commands::tune(&cfg, &out)? {
                println!("{}: {} -> {mean:.3}", spec.family().name(), serde_json::to_string(&spec).unwrap_or_default());
            }
        }
        Command::TrainPpo => println!("{}", commands::train_ppo(&cfg, &out, cli.variant)?.display()),
        Command::Collect { dataset } => {
            let dir = dataset_dir(dataset, &out);
            let n = commands::collect(&cfg, &dir, ckpt)?;
            println!("{n} trajectories in {}", dir.display());
        }
        Command::TrainDt { dataset } => println!("{}", commands::train_dt(&cfg, &out, &dataset_dir(dataset, &out))?.display()),
        Command::PricingGrid => print_summary(&experiments::pricing_grid(&cfg, &out, cli.workers)?),
        Command::ImrsAblation => print_summary(&experiments::imrs_ablation(&cfg, &out, cli.workers)?),
        Command::CollabDt { dataset, collect } => {
            let report = experiments::collab_dt(&cfg, &out, &dataset_dir(dataset, &out), *collect, cli.workers)?;
            print_summary(&report.results);
            println!("dt / ppo mean return ratio {:.4}", report.ratio());
        }
        Command::Validate | Command::Report => unreachable!("handled above"),
    }
    Ok(())
}

fn print_summary(results: &[experiments::PolicyResult]) {
    for r in results {
        let s = r.stats();
        println!("{:>12} {:>10} mean {:>10.3} se {:>8.3}", r.scenario, r.policy, s.mean, s.std_error());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
