use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use super::checks::{evaluate_checks, CheckExtras, CheckResult, RunState};
use super::config::{Check, PredictorSpec, ScenarioSpec};
use super::generate::{build_weights, generate_data, Generated};
use super::report::{write_report, SummaryRow};
use crate::bounds::{write_bound_report, write_sweep_csv};
use crate::data::{Dataset, WeightVector};
use crate::error::{LabError, Result};
use crate::geometry::{
    max_margin_linear, maximal_separable_subset, nonsep_optimum, write_certificate, write_split, MarginCertificate,
    RestrictedOptimum, SeparabilitySplit,
};
use crate::predictors::{read_params, write_params, HomogeneousMlp, LinearPredictor, Model};
use crate::trainer::{
    boosting_envelope_check, read_trajectory_csv, train, weak_reg_path, write_trajectory_csv, Attachments,
    EnvelopeReport, PathPoint, Snapshot, SnapshotCadence, Termination, TrainConfig, Trajectory, TrajectoryMeta,
};

pub const DATA_FILE: &str = "data.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const THETA_FILE: &str = "theta.txt";
pub const PATH_FILE: &str = "path.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const VERIFY_REPORT_FILE: &str = "verify_report.txt";
pub const SWEEP_FILE: &str = "bound_sweep.csv";
pub const PLOT_DIR: &str = "plots";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Files written by a scenario run and the verdicts they record.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub trajectory_csv: PathBuf,
    pub report: PathBuf,
    pub plot_data: Vec<PathBuf>,
    pub results: Vec<CheckResult>,
    pub summary: SummaryRow,
}

impl RunArtifacts {
    pub fn fail_count(&self) -> usize {
        self.summary.fail_count()
    }
}

pub fn build_model(spec: &ScenarioSpec) -> Result<Model> {
    let d = spec.generator.dim();
    Ok(match &spec.predictor {
        PredictorSpec::Linear => Model::Linear(LinearPredictor::new(d)),
        PredictorSpec::Mlp { hidden, activation } => {
            let mut dims = vec![d];
            dims.extend(hidden);
            dims.push(1);
            Model::Mlp(HomogeneousMlp::new(dims, *activation)?)
        }
    })
}

/// Oracles computed from the data before training.
pub struct Oracles {
    pub certificate: Option<MarginCertificate>,
    pub split: Option<SeparabilitySplit>,
    pub restricted: Option<RestrictedOptimum>,
    pub notes: Vec<String>,
}

pub fn compute_oracles(spec: &ScenarioSpec, model: &Model, data: &Dataset, weights: &WeightVector) -> Result<Oracles> {
    let linear = matches!(model, Model::Linear(_));
    let mut notes = Vec::new();
    let certificate = if linear { Some(max_margin_linear(data)?) } else { None };
    let need_split = linear && (spec.checks.contains(&Check::NonsepLimit) || certificate.as_ref().is_some_and(|c| !c.separable()));
    let split = if need_split { Some(maximal_separable_subset(data)?) } else { None };
    if let Some(s) = &split {
        if !s.near_threshold.is_empty() {
            notes.push(format!("samples near the separability threshold: {:?}", s.near_threshold));
        }
    }
    let restricted = match &split {
        Some(s) if !s.nonsep_indices.is_empty() => {
            match nonsep_optimum(data, &s.nonsep_indices, weights, spec.train.loss) {
                Ok(r) => Some(r),
                Err(e) => {
                    notes.push(format!("restricted optimum failed: {e}"));
                    None
                }
            }
        }
        _ => None,
    };
    Ok(Oracles { certificate, split, restricted, notes })
}

pub fn trajectory_meta(spec: &ScenarioSpec, model: &Model, data: &Dataset, cadence: SnapshotCadence) -> TrajectoryMeta {
    let p = model.as_predictor();
    TrajectoryMeta {
        lambda: spec.train.lambda,
        linear: p.is_linear(),
        alpha: p.degree(),
        every_step: cadence == SnapshotCadence::Every(1),
        max_feature_norm: data.max_feature_norm(),
        loss: spec.train.loss,
    }
}

fn write_path_csv(path: &Path, points: &[PathPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lambda", "gamma_tilde", "log_risk", "steps", "termination"])?;
    for p in points {
        w.write_record([
            format!("{:e}", p.lambda),
            p.gamma_tilde.map_or(String::new(), |g| format!("{g:e}")),
            format!("{:e}", p.log_risk),
            p.steps.to_string(),
            p.termination.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_path_csv(path: &Path, dim: usize) -> Result<Vec<PathPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| LabError::structural("bad path.csv row"))
        };
        let termination = match rec.get(4) {
            Some("stationarity") => Termination::Stationarity,
            Some("risk_target") => Termination::RiskTarget,
            _ => Termination::MaxSteps,
        };
        out.push(PathPoint {
            lambda: num(0)?,
            theta: DVector::zeros(dim),
            gamma_tilde: rec.get(1).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok()),
            log_risk: num(2)?,
            termination,
            steps: num(3)? as usize,
        });
    }
    Ok(out)
}

/// Two-column plot files; rows with non-finite values are skipped.
fn write_plots(dir: &Path, snapshots: &[Snapshot], path: Option<&[PathPoint]>, extras: &CheckExtras) -> Result<Vec<PathBuf>> {
    let plot_dir = dir.join(PLOT_DIR);
    fs::create_dir_all(&plot_dir)?;
    let mut files = Vec::new();
    let mut manifest = String::from("# file\tx\ty\n");
    let mut emit = |name: &str, x: &str, y: &str, rows: Vec<(f64, f64)>| -> Result<()> {
        let file = plot_dir.join(name);
        let mut w = BufWriter::new(File::create(&file)?);
        writeln!(w, "# {x} {y}")?;
        for (a, b) in rows.into_iter().filter(|(a, b)| a.is_finite() && b.is_finite()) {
            writeln!(w, "{a:e} {b:e}")?;
        }
        w.flush()?;
        manifest.push_str(&format!("{name}\t{x}\t{y}\n"));
        files.push(file);
        Ok(())
    };
    let series = |f: &dyn Fn(&Snapshot) -> Option<f64>| -> Vec<(f64, f64)> {
        snapshots.iter().filter_map(|s| f(s).map(|v| (s.t as f64, v))).collect()
    };
    emit("norm_theta.dat", "t", "norm_theta", series(&|s| Some(s.norm_theta)))?;
    emit("log_risk.dat", "t", "log_risk", series(&|s| Some(s.log_risk)))?;
    emit("gamma_tilde.dat", "t", "gamma_tilde", series(&|s| s.gamma_tilde))?;
    if snapshots.iter().any(|s| s.dir_gap.is_some()) {
        emit("dir_gap.dat", "t", "dir_gap", series(&|s| s.dir_gap))?;
    }
    if snapshots.iter().any(|s| s.nonsep_gap.is_some()) {
        emit("nonsep_gap.dat", "t", "nonsep_gap", series(&|s| s.nonsep_gap))?;
    }
    if let Some(points) = path {
        let mut rows: Vec<(f64, f64)> =
            points.iter().filter_map(|p| p.gamma_tilde.map(|g| (p.lambda, g))).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        emit("path_gamma_vs_lambda.dat", "lambda", "gamma_tilde", rows)?;
    }
    if let Some(sweep) = &extras.sweep {
        emit(
            "bound_vs_gamma.dat",
            "gamma",
            "total",
            sweep.curve.iter().map(|r| (r.gamma_used, r.total)).collect(),
        )?;
    }
    fs::write(plot_dir.join(MANIFEST_FILE), manifest)?;
    Ok(files)
}

struct Prepared {
    generated: Generated,
    weights: WeightVector,
    model: Model,
    oracles: Oracles,
}

fn prepare(spec: &ScenarioSpec) -> Result<Prepared> {
    let generated = generate_data(&spec.generator, spec.seed)?;
    let weights = build_weights(&spec.weights, &spec.generator, &generated.data, spec.seed)?;
    let model = build_model(spec)?;
    let oracles = compute_oracles(spec, &model, &generated.data, &weights)?;
    Ok(Prepared { generated, weights, model, oracles })
}

fn attachments(p: &Prepared) -> Attachments<'_> {
    Attachments {
        certificate: p.oracles.certificate.as_ref().filter(|c| c.separable()),
        restricted: p.oracles.restricted.as_ref(),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &ScenarioSpec,
    p: &Prepared,
    out_dir: &Path,
    report_name: &str,
    snapshots: &[Snapshot],
    final_theta: &DVector<f64>,
    termination: Option<Termination>,
    train_error: Option<String>,
    path: Option<std::result::Result<Vec<PathPoint>, String>>,
    envelope: Option<std::result::Result<EnvelopeReport, String>>,
) -> Result<RunArtifacts> {
    let state = RunState {
        spec,
        data: &p.generated.data,
        weights: &p.weights,
        oracle: &p.generated.oracle,
        model: &p.model,
        certificate: p.oracles.certificate.as_ref(),
        split: p.oracles.split.as_ref(),
        restricted: p.oracles.restricted.as_ref(),
        snapshots,
        final_theta,
        train_error: train_error.as_deref(),
        path: path.as_ref().map(|r| r.as_deref().map_err(String::as_str)),
        envelope: envelope.as_ref().map(|r| r.as_ref().map_err(String::as_str)),
    };
    let (results, extras) = evaluate_checks(&state);

    if let Some(sweep) = &extras.sweep {
        write_sweep_csv(File::create(out_dir.join(SWEEP_FILE))?, &sweep.curve)?;
    }
    let plot_data = write_plots(out_dir, snapshots, path.as_ref().and_then(|r| r.as_deref().ok()), &extras)?;

    let summary = SummaryRow::from_run(spec, snapshots, &results);
    let report = out_dir.join(report_name);
    {
        let mut w = BufWriter::new(File::create(&report)?);
        write_report(&mut w, spec, &p.generated.data, snapshots, termination, &summary, &results, &p.oracles.notes, train_error.as_deref())?;
        if let Some(c) = &p.oracles.certificate {
            write_certificate(&mut w, c)?;
        }
        if let Some(s) = &p.oracles.split {
            write_split(&mut w, s)?;
        }
        if let Some(sweep) = &extras.sweep {
            if let Some(r) = sweep.curve.iter().find(|r| r.gamma_used == sweep.gamma_opt) {
                write_bound_report(&mut w, r)?;
            }
        }
        w.flush()?;
    }
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        trajectory_csv: out_dir.join(TRAJECTORY_FILE),
        report,
        plot_data,
        results,
        summary,
    })
}

/// Generates data, computes oracles, trains, evaluates the enabled checks and
/// writes every artifact under `spec.out_dir`.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunArtifacts> {
    let out_dir = spec.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let p = prepare(spec)?;
    p.generated.data.save(out_dir.join(DATA_FILE))?;
    let predictor = p.model.as_predictor();
    let attach = attachments(&p);

    let (snapshots, final_theta, termination, train_error) =
        match train(predictor, &p.generated.data, &p.weights, &spec.train, &attach) {
            Ok(tr) => (tr.snapshots, tr.final_theta, Some(tr.termination), None),
            Err(LabError::Divergence { step, last }) => {
                let msg = format!("diverged at step {step}; learning rate is likely too large");
                (vec![*last], DVector::zeros(predictor.num_params()), None, Some(msg))
            }
            Err(e) => (Vec::new(), DVector::zeros(predictor.num_params()), None, Some(e.to_string())),
        };
    write_trajectory_csv(File::create(out_dir.join(TRAJECTORY_FILE))?, &snapshots)?;
    write_params(predictor, final_theta.as_slice(), File::create(out_dir.join(THETA_FILE))?)?;

    let path = spec.lambda_schedule.as_ref().map(|lambdas| {
        weak_reg_path(predictor, &p.generated.data, &p.weights, lambdas, &spec.train).map_err(|e| e.to_string())
    });
    if let Some(Ok(points)) = &path {
        write_path_csv(&out_dir.join(PATH_FILE), points)?;
    }

    let envelope = if spec.checks.contains(&Check::Envelope) && train_error.is_none() {
        Some(envelope_run(spec, &p, &snapshots, &final_theta, termination))
    } else {
        None
    };

    if snapshots.is_empty() {
        return Err(LabError::Numeric(train_error.unwrap_or_else(|| "training produced no snapshots".into())));
    }
    finish(spec, &p, &out_dir, REPORT_FILE, &snapshots, &final_theta, termination, train_error, path, envelope)
}

/// Reuses the main trajectory when it is already per-step; otherwise retrains with
/// every step recorded.
fn envelope_run(
    spec: &ScenarioSpec,
    p: &Prepared,
    snapshots: &[Snapshot],
    final_theta: &DVector<f64>,
    termination: Option<Termination>,
) -> std::result::Result<EnvelopeReport, String> {
    let data = &p.generated.data;
    if spec.train.cadence == SnapshotCadence::Every(1) {
        let tr = Trajectory {
            snapshots: snapshots.to_vec(),
            final_theta: final_theta.clone(),
            termination: termination.unwrap_or(Termination::MaxSteps),
            meta: trajectory_meta(spec, &p.model, data, SnapshotCadence::Every(1)),
        };
        return Ok(boosting_envelope_check(&tr));
    }
    let cfg = TrainConfig { cadence: SnapshotCadence::Every(1), ..spec.train.clone() };
    train(p.model.as_predictor(), data, &p.weights, &cfg, &Attachments::default())
        .map(|tr| boosting_envelope_check(&tr))
        .map_err(|e| e.to_string())
}

/// Re-evaluates the checks on artifacts previously written by [`run_scenario`].
pub fn verify_scenario(spec: &ScenarioSpec) -> Result<RunArtifacts> {
    let out_dir = spec.out_dir.clone();
    let p = prepare(spec)?;
    let stored = Dataset::load(out_dir.join(DATA_FILE))?;
    if stored.len() != p.generated.data.len() || stored.dim() != p.generated.data.dim() {
        return Err(LabError::structural("stored data does not match the spec; rerun `train`"));
    }
    let snapshots = read_trajectory_csv(File::open(out_dir.join(TRAJECTORY_FILE))?)?;
    if snapshots.is_empty() {
        return Err(LabError::structural("stored trajectory is empty"));
    }
    let (_, theta) = read_params(BufReader::new(File::open(out_dir.join(THETA_FILE))?))?;
    let final_theta = DVector::from_vec(theta);
    if final_theta.len() != p.model.as_predictor().num_params() {
        return Err(LabError::structural("stored parameters do not match the predictor"));
    }
    let path = match &spec.lambda_schedule {
        Some(_) => {
            let file = out_dir.join(PATH_FILE);
            Some(if file.exists() {
                read_path_csv(&file, final_theta.len()).map_err(|e| e.to_string())
            } else {
                Err("no stored path".to_string())
            })
        }
        None => None,
    };
    let envelope = spec.checks.contains(&Check::Envelope).then(|| {
        let tr = Trajectory {
            snapshots: snapshots.clone(),
            final_theta: final_theta.clone(),
            termination: Termination::MaxSteps,
            meta: trajectory_meta(spec, &p.model, &p.generated.data, spec.train.cadence),
        };
        Ok(boosting_envelope_check(&tr))
    });
    finish(spec, &p, &out_dir, VERIFY_REPORT_FILE, &snapshots, &final_theta, None, None, path, envelope)
}
