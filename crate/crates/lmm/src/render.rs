//! SVG charts drawn from the CSV tables experiments write, so a chart can be
//! regenerated from its table alone.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::exec::write_text;
use crate::report::Table;
use crate::svg;

fn col(t: &Table, name: &str) -> CliResult<usize> {
    t.column(name).ok_or_else(|| CliError::Validation(format!("table has no column {name}")))
}

fn cell_f64(row: &[String], k: usize) -> CliResult<f64> {
    row[k].parse().map_err(|e| CliError::Validation(format!("bad number {:?}: {e}", row[k])))
}

fn unique(t: &Table, k: usize) -> Vec<String> {
    t.rows.iter().map(|r| r[k].clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Grouped bars of `mean` with `std_error` whiskers, grouped by `scenario`.
pub fn summary_bars(summary: &Table, title: &str) -> CliResult<String> {
    let (ks, kp, km, ke) = (col(summary, "scenario")?, col(summary, "policy")?, col(summary, "mean")?, col(summary, "std_error")?);
    let groups = unique(summary, ks);
    let series = unique(summary, kp);
    let mut values = vec![vec![(0.0, 0.0); series.len()]; groups.len()];
    for r in &summary.rows {
        let g = groups.iter().position(|x| *x == r[ks]).unwrap();
        let s = series.iter().position(|x| *x == r[kp]).unwrap();
        values[g][s] = (cell_f64(r, km)?, cell_f64(r, ke)?);
    }
    Ok(svg::grouped_bars(title, "mean episode return", &groups, &series, &values))
}

/// Density curves of one scenario from a `scenario, policy, x, density` table.
pub fn kde_lines(kde: &Table, scenario: &str) -> CliResult<String> {
    let (ks, kp, kx, kd) = (col(kde, "scenario")?, col(kde, "policy")?, col(kde, "x")?, col(kde, "density")?);
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in kde.rows.iter().filter(|r| r[ks] == scenario) {
        let pt = (cell_f64(r, kx)?, cell_f64(r, kd)?);
        match series.iter_mut().find(|(n, _)| *n == r[kp]) {
            Some((_, v)) => v.push(pt),
            None => series.push((r[kp].clone(), vec![pt])),
        }
    }
    Ok(svg::line_chart(&format!("Return density, {scenario}"), "episode return", "density", &series))
}

/// Order quantity per period, one line per (policy, item).
pub fn order_lines(trace: &Table) -> CliResult<String> {
    let (kp, ki, kt, ko) = (col(trace, "policy")?, col(trace, "item")?, col(trace, "t")?, col(trace, "order")?);
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &trace.rows {
        let name = format!("{} item {}", r[kp], r[ki]);
        let pt = (cell_f64(r, kt)?, cell_f64(r, ko)?);
        match series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => v.push(pt),
            None => series.push((name, vec![pt])),
        }
    }
    Ok(svg::line_chart("Order decisions", "period", "order quantity", &series))
}

/// Training curve from a `steps, mean_return` table.
pub fn curve_line(curve: &Table) -> CliResult<String> {
    let xs = curve.numbers("steps")?;
    let ys = curve.numbers("mean_return")?;
    let pts = xs.into_iter().zip(ys).collect();
    Ok(svg::line_chart("PPO training curve", "environment steps", "mean evaluation return", &[("ppo".into(), pts)]))
}

/// Redraws every chart whose table exists in `out`.
pub fn render_dir(out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> CliResult<()> {
        let p = out.join(name);
        write_text(&p, &text)?;
        written.push(p);
        Ok(())
    };
    let load = |name: &str| -> CliResult<Option<Table>> {
        let p = out.join(name);
        if p.exists() {
            Ok(Some(Table::read(&p)?.1))
        } else {
            Ok(None)
        }
    };
    if let Some(t) = load("pricing_summary.csv")? {
        emit("pricing_grid.svg", summary_bars(&t, "Pricing and replenishment, scenarios a-d")?)?;
    }
    if let Some(t) = load("imrs_summary.csv")? {
        emit("imrs_summary.svg", summary_bars(&t, "Recommendation and inventory ablation")?)?;
    }
    if let Some(t) = load("imrs_kde.csv")? {
        let ks = col(&t, "scenario")?;
        for sc in unique(&t, ks) {
            emit(&format!("imrs_kde_{sc}.svg"), kde_lines(&t, &sc)?)?;
        }
    }
    if let Some(t) = load("collab_summary.csv")? {
        emit("collab_comparison.svg", summary_bars(&t, "Collaborative decisions")?)?;
    }
    if let Some(t) = load("collab_trace.csv")? {
        emit("collab_orders.svg", order_lines(&t)?)?;
    }
    if let Some(t) = load("curve.csv")? {
        emit("curve.svg", curve_line(&t)?)?;
    }
    Ok(written)
}
