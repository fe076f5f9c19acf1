//! Newline-delimited JSON trajectory files.
//!
//! The first line is a header `{"config_hash": .., "seed": .., "gamma": ..}`;
//! every further line is one period `{"t", "rtg", "obs", "act", "reward"}`.
//! A dataset is a directory of such files, read in file-name order.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lmm_core::sim::{Record, Trajectory};
use lmm_core::{EnvAction, EnvObservation};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub config_hash: String,
    pub seed: u64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    t: usize,
    rtg: f64,
    obs: Vec<f64>,
    act: Vec<f64>,
    reward: f64,
}

pub fn to_ndjson(traj: &Trajectory, config_hash: &str) -> String {
    let header = TrajectoryHeader { config_hash: config_hash.to_string(), seed: traj.seed, gamma: traj.gamma };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in &traj.records {
        let line = Line {
            t: r.obs.t,
            rtg: r.rtg,
            obs: r.obs.features.clone(),
            act: r.act.components.clone(),
            reward: r.reward,
        };
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, config_hash: &str) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_ndjson(traj, config_hash).as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_trajectory(path: &Path) -> CliResult<(TrajectoryHeader, Trajectory)> {
    let bad = |reason: String| CliError::BadFile { path: path.to_path_buf(), reason };
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| CliError::io(path, e))?;
    let header: TrajectoryHeader = serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
        records.push(Record {
            rtg: l.rtg,
            obs: EnvObservation { features: l.obs, t: l.t },
            act: EnvAction::new(l.act),
            reward: l.reward,
        });
    }
    let traj = Trajectory { records, gamma: header.gamma, seed: header.seed };
    Ok((header, traj))
}

/// Writes `name.ndjson` files into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, items: &[(String, Trajectory)], config_hash: &str) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::with_capacity(items.len());
    for (name, traj) in items {
        let p = dir.join(format!("{name}.ndjson"));
        write_trajectory(&p, traj, config_hash)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Every `.ndjson` file in `dir`, sorted by name. A missing or empty
/// directory is `MissingDataset`.
pub fn read_dataset(dir: &Path) -> CliResult<Vec<(TrajectoryHeader, Trajectory)>> {
    let entries = fs::read_dir(dir).map_err(|_| CliError::MissingDataset(dir.to_path_buf()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    if paths.is_empty() {
        return Err(CliError::MissingDataset(dir.to_path_buf()));
    }
    paths.sort();
    paths.iter().map(|p| read_trajectory(p)).collect()
}
