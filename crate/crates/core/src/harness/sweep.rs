use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{read_sweep_list, ScenarioSpec};
use super::report::{sort_rows, SummaryRow};
use super::scenario::run_scenario;
use crate::error::{LabError, Result};

/// Runs each scenario file of a sweep list on `jobs` threads. A scenario that
/// fails to load or run becomes an errored row instead of aborting the sweep.
/// With `out_root` set, each scenario writes to `out_root/<id>`.
pub fn run_sweep(list: &Path, jobs: usize, seed_override: Option<u64>, out_root: Option<&Path>) -> Result<Vec<SummaryRow>> {
    let files = read_sweep_list(list)?;
    run_files(&files, jobs, seed_override, out_root)
}

pub fn run_files(
    files: &[PathBuf],
    jobs: usize,
    seed_override: Option<u64>,
    out_root: Option<&Path>,
) -> Result<Vec<SummaryRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LabError::Config(format!("cannot build thread pool: {e}")))?;
    let mut rows: Vec<SummaryRow> = pool.install(|| {
        files
            .par_iter()
            .map(|f| {
                let mut spec = match std::fs::read_to_string(f)
                    .map_err(LabError::from)
                    .and_then(|text| ScenarioSpec::parse(&text, seed_override))
                {
                    Ok(s) => s,
                    Err(e) => return SummaryRow::errored(f.display().to_string(), e.to_string()),
                };
                if let Some(root) = out_root {
                    spec.out_dir = root.join(&spec.id);
                }
                match run_scenario(&spec) {
                    Ok(a) => a.summary,
                    Err(e) => SummaryRow::errored(spec.id.clone(), e.to_string()),
                }
            })
            .collect()
    });
    sort_rows(&mut rows);
    Ok(rows)
}
