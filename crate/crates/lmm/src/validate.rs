//! The `validate` subcommand: the core oracle suite plus integrity checks of
//! any checkpoints found. Reads files only.

use std::path::{Path, PathBuf};

use lmm_core::checks::{run_all, Check};

use crate::checkpoint::{dt_from_checkpoint, Checkpoint, ModelKind};
use crate::error::{CliError, CliResult};
use crate::exec::checkpoint_dir;

/// `explicit` plus every `*.ckpt` directly under `out` and `out/checkpoints`,
/// sorted and deduplicated.
pub fn checkpoint_paths(explicit: Option<&Path>, out: &Path) -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = explicit.map(Path::to_path_buf).into_iter().collect();
    for dir in [out.to_path_buf(), checkpoint_dir(out)] {
        if let Ok(entries) = std::fs::read_dir(&dir) {
            paths.extend(entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "ckpt")));
        }
    }
    paths.sort();
    paths.dedup();
    paths
}

pub fn check_checkpoint(path: &Path) -> Check {
    let name = format!("checkpoint {}", path.display());
    let loaded = Checkpoint::load(path).and_then(|ck| {
        if ck.header.kind == ModelKind::Dt {
            dt_from_checkpoint(&ck, path)?;
        }
        Ok(ck)
    });
    match loaded {
        Ok(ck) => Check::new(&name, true, format!("{:?}, {} parameters, {} steps", ck.header.kind, ck.params.len(), ck.header.steps)),
        Err(CliError::CorruptCheckpoint { reason, .. }) => Check::new(&name, false, reason),
        Err(e) => Check::new(&name, false, e.to_string()),
    }
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{status}  {:width$}  {}\n", c.name, c.detail));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    s.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    s
}

/// Runs every check and prints the table. Fails with a validation error
/// naming the failed checks.
pub fn validate(checkpoint: Option<&Path>, out: &Path) -> CliResult<Vec<Check>> {
    let mut checks = run_all();
    checks.extend(checkpoint_paths(checkpoint, out).iter().map(|p| check_checkpoint(p)));
    print!("{}", format_table(&checks));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_checkpoint_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, b"LMMCKPT1garbage").unwrap();
        let c = check_checkpoint(&p);
        assert!(!c.passed);
        assert!(c.name.contains("bad.ckpt"));
        assert_eq!(checkpoint_paths(None, dir.path()), vec![p]);
    }
}
