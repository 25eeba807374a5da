use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use marginlab::harness::{
    build_weights, collect_reports, env_seed, generate_data, run_scenario, run_sweep, summary_table, verify_scenario,
    write_generated, write_summary_csv, CheckResult, ScenarioSpec, SummaryRow,
};

const MAX_EXIT: usize = 125;
// Above the FAIL-count range.
const ERROR_EXIT: u8 = 126;

#[derive(Parser)]
#[command(name = "marginlab", version, about = "Weighted gradient descent experiments with margin and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset, weights and oracle annotations of a scenario.
    Gen {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a scenario, evaluate its checks and write all artifacts.
    Train {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the spec's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the checks on artifacts written by `train`.
    Verify {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every scenario listed in a sweep file.
    Sweep {
        list: PathBuf,
        #[arg(short = 'j', long = "jobs", default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Writes each scenario to OUT/<id> and the summary to OUT/summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the summary table from the reports below a directory.
    Report { dir: PathBuf },
}

fn load_spec(path: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let seed = match seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    let mut spec = ScenarioSpec::parse(&text, seed).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(o) = out {
        spec.out_dir = o;
    }
    Ok(spec)
}

fn print_results(id: &str, results: &[CheckResult]) {
    for r in results {
        println!("{id} {:<12} {:<13} {}", r.check.name(), r.verdict.name(), r.note);
    }
}

fn total_failures(rows: &[SummaryRow]) -> usize {
    rows.iter().map(SummaryRow::fail_count).sum()
}

fn run(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Gen { spec, seed, out } => {
            let spec = load_spec(&spec, seed, None)?;
            let generated = generate_data(&spec.generator, spec.seed)?;
            let weights = build_weights(&spec.weights, &spec.generator, &generated.data, spec.seed)?;
            write_generated(&out, &generated, &weights)?;
            println!("wrote {} samples to {}", generated.data.len(), out.display());
            Ok(0)
        }
        Command::Train { spec, seed, out } => {
            let spec = load_spec(&spec, seed, out)?;
            let artifacts = run_scenario(&spec)?;
            print_results(&spec.id, &artifacts.results);
            println!("report: {}", artifacts.report.display());
            Ok(artifacts.fail_count())
        }
        Command::Verify { spec, seed, out } => {
            let spec = load_spec(&spec, seed, out)?;
            let artifacts = verify_scenario(&spec)?;
            print_results(&spec.id, &artifacts.results);
            println!("report: {}", artifacts.report.display());
            Ok(artifacts.fail_count())
        }
        Command::Sweep { list, jobs, seed, out } => {
            let seed = match seed {
                Some(s) => Some(s),
                None => env_seed()?,
            };
            let rows = run_sweep(&list, jobs, seed, out.as_deref())?;
            print!("{}", summary_table(&rows));
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?, &rows)?;
            }
            Ok(total_failures(&rows))
        }
        Command::Report { dir } => {
            let rows = collect_reports(&dir)?;
            print!("{}", summary_table(&rows));
            write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?, &rows)?;
            Ok(total_failures(&rows))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(fails) => ExitCode::from(fails.min(MAX_EXIT) as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR_EXIT)
        }
    }
}
