//! Scenario configuration, synthetic data, check evaluation and reporting.

mod checks;
mod config;
mod generate;
mod report;
mod scenario;
mod sweep;

pub use checks::{evaluate_checks, CheckExtras, CheckResult, RunState, Verdict};
pub use config::{
    env_seed, read_sweep_list, Check, CheckOptions, Generator, KeyValues, PredictorSpec, ScenarioSpec, WeightScheme,
    SEED_ENV,
};
pub use generate::{build_weights, generate_data, sample_target, write_generated, Generated, Oracle};
pub use report::{collect_reports, parse_report, sort_rows, summary_table, write_report, write_summary_csv, SummaryRow, SUMMARY_HEADER};
pub use scenario::{
    build_model, compute_oracles, run_scenario, trajectory_meta, verify_scenario, Oracles, RunArtifacts, DATA_FILE,
    MANIFEST_FILE, PATH_FILE, PLOT_DIR, REPORT_FILE, SWEEP_FILE, THETA_FILE, TRAJECTORY_FILE, VERIFY_REPORT_FILE,
};
pub use sweep::{run_files, run_sweep};
