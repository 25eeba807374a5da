//! Full-batch gradient descent on the weighted risk, with per-step instrumentation.

mod envelope;
mod path;
mod trajectory_csv;

pub use envelope::{boosting_envelope_check, EnvelopeReport, EnvelopeVerdict};
pub use path::{weak_reg_path, PathPoint};
pub use trajectory_csv::{read_trajectory_csv, write_trajectory_csv, TRAJECTORY_HEADER};

use nalgebra::DVector;

use crate::data::{norm, Dataset, WeightVector};
use crate::error::{LabError, Result};
use crate::geometry::{project_span, MarginCertificate, RestrictedOptimum};
use crate::loss::LossKind;
use crate::predictors::Predictor;
use crate::risk::{Evaluation, Objective};

/// Parameters larger than this in magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Constant,
    /// `eta_t = min(eta0, 1 / (L * max(1, log(1/L))^(3 - 2/alpha)))`.
    CappedByRisk,
}

impl Schedule {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" => Some(Schedule::Constant),
            "capped" | "capped_by_risk" | "cappedbyrisk" => Some(Schedule::CappedByRisk),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Schedule::Constant => "constant",
            Schedule::CappedByRisk => "capped_by_risk",
        }
    }

    /// Learning rate for a step taken at objective value `exp(log_risk)`.
    pub fn rate(self, eta0: f64, log_risk: f64, alpha: f64) -> f64 {
        match self {
            Schedule::Constant => eta0,
            Schedule::CappedByRisk => {
                let log_cap = -log_risk - (3.0 - 2.0 / alpha) * (-log_risk).max(1.0).ln();
                if log_cap >= eta0.ln() {
                    eta0
                } else {
                    log_cap.exp()
                }
            }
        }
    }
}

/// Which steps get a snapshot. The final step is always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnapshotCadence {
    Every(usize),
    /// `t = 0` and `t = 2^k`.
    #[default]
    PowersOfTwo,
}

impl SnapshotCadence {
    pub fn hits(self, t: usize) -> bool {
        match self {
            SnapshotCadence::Every(k) => t.is_multiple_of(k.max(1)),
            SnapshotCadence::PowersOfTwo => t == 0 || t.is_power_of_two(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta0: f64,
    pub schedule: Schedule,
    pub max_steps: usize,
    pub lambda: f64,
    pub r: f64,
    pub loss: LossKind,
    pub cadence: SnapshotCadence,
    pub seed: u64,
    /// Scale of the Gaussian initialization for nonlinear predictors.
    pub init_scale: f64,
    /// Stop once `||grad L_lambda|| <= stop_grad_norm`; 0 disables.
    pub stop_grad_norm: f64,
    pub stop_log_risk: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta0: 0.1,
            schedule: Schedule::Constant,
            max_steps: 10_000,
            lambda: 0.0,
            r: 2.0,
            loss: LossKind::Exponential,
            cadence: SnapshotCadence::PowersOfTwo,
            seed: 0,
            init_scale: 1.0,
            stop_grad_norm: 0.0,
            stop_log_risk: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(LabError::config(format!("eta0 = {} must be positive", self.eta0)));
        }
        if self.max_steps == 0 {
            return Err(LabError::config("max_steps must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LabError::config(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(LabError::config(format!("r = {} must be positive", self.r)));
        }
        if let SnapshotCadence::Every(0) = self.cadence {
            return Err(LabError::config("snapshot cadence must be positive"));
        }
        if !(self.stop_grad_norm >= 0.0) {
            return Err(LabError::config("stop_grad_norm must be >= 0"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(LabError::config("init_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    /// Log of the (regularized) objective at `theta_t`.
    pub log_risk: f64,
    pub norm_theta: f64,
    /// `None` at `theta = 0`.
    pub gamma_tilde: Option<f64>,
    /// Every margin strictly positive.
    pub separated: bool,
    /// `eta_t * L(theta_t)`.
    pub a_t: f64,
    /// `||grad L(theta_t)|| / L(theta_t)`.
    pub b_t: f64,
    pub log_a_t: f64,
    pub log_b_t: f64,
    pub eta_t: f64,
    /// `||theta/||theta|| - theta*||` when a certificate is attached.
    pub dir_gap: Option<f64>,
    /// `||P theta - theta_tilde||` when a restricted optimum is attached.
    pub nonsep_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxSteps,
    Stationarity,
    RiskTarget,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::MaxSteps => "max_steps",
            Termination::Stationarity => "stationarity",
            Termination::RiskTarget => "risk_target",
        }
    }
}

/// Run conditions needed to interpret a trajectory after the fact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub lambda: f64,
    pub linear: bool,
    pub alpha: f64,
    pub every_step: bool,
    pub max_feature_norm: f64,
    pub loss: LossKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub final_theta: DVector<f64>,
    pub termination: Termination,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory has at least one snapshot")
    }

    /// Step of the first snapshot where all margins are positive.
    pub fn first_separated(&self) -> Option<usize> {
        self.snapshots.iter().find(|s| s.separated).map(|s| s.t)
    }
}

/// Oracles to measure the trajectory against.
#[derive(Debug, Clone, Copy, Default)]
pub struct Attachments<'a> {
    pub certificate: Option<&'a MarginCertificate>,
    pub restricted: Option<&'a RestrictedOptimum>,
}

fn snapshot(
    t: usize,
    theta: &[f64],
    ev: &Evaluation,
    eta_t: f64,
    alpha: f64,
    attach: &Attachments,
) -> Result<Snapshot> {
    let norm_theta = norm(theta);
    let gamma_tilde = if norm_theta > 0.0 {
        let min = ev.margins.iter().copied().fold(f64::INFINITY, f64::min);
        Some(min / norm_theta.powf(alpha))
    } else {
        None
    };
    let log_a_t = eta_t.ln() + ev.log_risk;
    let log_b_t = ev.log_grad_norm - ev.log_risk;
    let dir_gap = match attach.certificate.and_then(|c| c.theta_star.as_ref()) {
        Some(star) if norm_theta > 0.0 => {
            if star.len() != theta.len() {
                return Err(LabError::structural("certificate dimension differs from parameters"));
            }
            Some(theta.iter().zip(star).map(|(a, b)| (a / norm_theta - b).powi(2)).sum::<f64>().sqrt())
        }
        _ => None,
    };
    let nonsep_gap = match attach.restricted {
        Some(r) => Some((project_span(theta, &r.basis)? - &r.theta_tilde).norm()),
        None => None,
    };
    Ok(Snapshot {
        t,
        log_risk: ev.log_risk,
        norm_theta,
        gamma_tilde,
        separated: ev.separated(),
        a_t: log_a_t.exp(),
        b_t: log_b_t.exp(),
        log_a_t,
        log_b_t,
        eta_t,
        dir_gap,
        nonsep_gap,
    })
}

/// Gradient descent from the predictor's seeded initialization.
pub fn train(
    predictor: &dyn Predictor,
    data: &Dataset,
    w: &WeightVector,
    config: &TrainConfig,
    attach: &Attachments,
) -> Result<Trajectory> {
    let theta0 = predictor.init(config.seed, config.init_scale);
    train_from(predictor, data, w, config, attach, theta0)
}

/// Gradient descent from an explicit starting point.
pub fn train_from(
    predictor: &dyn Predictor,
    data: &Dataset,
    w: &WeightVector,
    config: &TrainConfig,
    attach: &Attachments,
    theta0: DVector<f64>,
) -> Result<Trajectory> {
    config.validate()?;
    let objective = Objective::new(predictor, data, w, config.loss, config.lambda, config.r)?;
    if theta0.len() != predictor.num_params() {
        return Err(LabError::structural("initial parameters have the wrong length"));
    }
    let alpha = predictor.degree();
    let meta = TrajectoryMeta {
        lambda: config.lambda,
        linear: predictor.is_linear(),
        alpha,
        every_step: config.cadence == SnapshotCadence::Every(1),
        max_feature_norm: data.max_feature_norm(),
        loss: config.loss,
    };

    let mut theta = theta0;
    let mut snapshots = Vec::new();
    let mut last: Option<Snapshot> = None;
    let mut t = 0;
    let termination = loop {
        let ev = match objective.evaluate(theta.as_slice()) {
            Ok(ev) => ev,
            Err(e) => {
                return match last {
                    Some(s) => Err(LabError::Divergence { step: t, last: Box::new(s) }),
                    None => Err(e),
                };
            }
        };
        let eta_t = config.schedule.rate(config.eta0, ev.log_risk, alpha);
        let snap = snapshot(t, theta.as_slice(), &ev, eta_t, alpha, attach)?;

        let stop = if config.stop_grad_norm > 0.0 && ev.log_grad_norm <= config.stop_grad_norm.ln() {
            Some(Termination::Stationarity)
        } else if config.stop_log_risk.is_some_and(|target| ev.log_risk <= target) {
            Some(Termination::RiskTarget)
        } else if t >= config.max_steps {
            Some(Termination::MaxSteps)
        } else {
            None
        };
        if let Some(stop) = stop {
            snapshots.push(snap);
            break stop;
        }
        if config.cadence.hits(t) {
            snapshots.push(snap.clone());
        }

        let step = (eta_t.ln() + ev.log_scale).exp();
        theta.axpy(-step, &ev.direction, 1.0);
        t += 1;
        if theta.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(LabError::Divergence { step: t, last: Box::new(snap) });
        }
        last = Some(snap);
    };
    Ok(Trajectory { snapshots, final_theta: theta, termination, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::LinearPredictor;

    fn single() -> Dataset {
        Dataset::new(vec![vec![1.0]], vec![1.0], None).unwrap()
    }

    #[test]
    fn one_step_on_one_sample() {
        let cfg = TrainConfig { eta0: 1.0, max_steps: 1, cadence: SnapshotCadence::Every(1), ..Default::default() };
        let tr = train(&LinearPredictor::new(1), &single(), &WeightVector::uniform(1), &cfg, &Attachments::default())
            .unwrap();
        assert_eq!(tr.final_theta.as_slice(), &[1.0]);
        assert_eq!(tr.snapshots.len(), 2);
        assert_eq!(tr.snapshots[0].gamma_tilde, None);
        assert!((tr.snapshots[1].log_risk + 1.0).abs() < 1e-15);
        assert!((tr.snapshots[0].a_t - 1.0).abs() < 1e-15 && (tr.snapshots[0].b_t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn runs_are_bit_identical() {
        let data = Dataset::new(vec![vec![1.0, 0.3], vec![-0.5, -1.0]], vec![1.0, -1.0], None).unwrap();
        let cfg = TrainConfig { max_steps: 500, ..Default::default() };
        let p = LinearPredictor::new(2);
        let w = WeightVector::uniform(2);
        let a = train(&p, &data, &w, &cfg, &Attachments::default()).unwrap();
        let b = train(&p, &data, &w, &cfg, &Attachments::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_pair_norm_grows_after_separation() {
        let data = Dataset::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0], None).unwrap();
        let cfg = TrainConfig { eta0: 0.1, max_steps: 10_000, cadence: SnapshotCadence::Every(100), ..Default::default() };
        let tr = train(&LinearPredictor::new(2), &data, &WeightVector::uniform(2), &cfg, &Attachments::default())
            .unwrap();
        let first = tr.snapshots.iter().position(|s| s.separated).unwrap();
        for pair in tr.snapshots[first..].windows(2) {
            assert!(pair[1].norm_theta > pair[0].norm_theta);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let data = Dataset::new(vec![vec![1.0], vec![1.0]], vec![1.0, -1.0], None).unwrap();
        let w = WeightVector::new(vec![4.0, 1.0], 4.0).unwrap();
        let cfg = TrainConfig { eta0: 1e6, max_steps: 100, ..Default::default() };
        let err = train(&LinearPredictor::new(1), &data, &w, &cfg, &Attachments::default()).unwrap_err();
        assert!(matches!(err, LabError::Divergence { .. }));
    }

    #[test]
    fn capped_rate() {
        // L = e: cap = 1/e
        let r = Schedule::CappedByRisk.rate(10.0, 1.0, 1.0);
        assert!((r - (-1f64).exp()).abs() < 1e-15);
        // L = e^-5, alpha = 1: cap = e^5 / 5
        let r = Schedule::CappedByRisk.rate(1e9, -5.0, 1.0);
        assert!((r - 5f64.exp() / 5.0).abs() < 1e-9);
        assert_eq!(Schedule::CappedByRisk.rate(0.1, -5.0, 1.0), 0.1);
    }

    #[test]
    fn stationarity_stop() {
        let data = Dataset::new(vec![vec![1.0], vec![1.0]], vec![1.0, -1.0], None).unwrap();
        let w = WeightVector::new(vec![2.0, 1.0], 2.0).unwrap();
        let cfg = TrainConfig { eta0: 0.5, max_steps: 100_000, stop_grad_norm: 1e-9, ..Default::default() };
        let tr = train(&LinearPredictor::new(1), &data, &w, &cfg, &Attachments::default()).unwrap();
        assert_eq!(tr.termination, Termination::Stationarity);
        assert!((tr.final_theta[0] - 0.5 * 2f64.ln()).abs() < 1e-8);
    }
}
