use nalgebra::DVector;

use super::config::{Check, ScenarioSpec};
use super::generate::{sample_target, Oracle};
use crate::bounds::{
    finite_step_margin_floor, optimal_gamma_sweep, pooled_sup_norm, direction_gap_bound, nonsep_rate_check,
    GammaSweep,
};
use crate::data::{Dataset, WeightVector};
use crate::geometry::{MarginCertificate, RestrictedOptimum, SeparabilitySplit};
use crate::predictors::Model;
use crate::risk::generalized_kl;
use crate::trainer::{EnvelopeReport, EnvelopeVerdict, PathPoint, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inapplicable,
    Error,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inapplicable => "INAPPLICABLE",
            Verdict::Error => "ERROR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Verdict::Pass, Verdict::Fail, Verdict::Inapplicable, Verdict::Error].into_iter().find(|v| v.name() == s.trim())
    }

    /// Counts toward the exit status.
    pub fn is_failure(self) -> bool {
        matches!(self, Verdict::Fail | Verdict::Error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    pub verdict: Verdict,
    pub metrics: Vec<(String, String)>,
    pub note: String,
}

impl CheckResult {
    fn new(check: Check, verdict: Verdict, note: impl Into<String>) -> Self {
        Self { check, verdict, metrics: Vec::new(), note: note.into() }
    }

    fn metric(mut self, key: &str, value: impl ToString) -> Self {
        self.metrics.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Everything a check may look at, whether freshly trained or read back from disk.
pub struct RunState<'a> {
    pub spec: &'a ScenarioSpec,
    pub data: &'a Dataset,
    pub weights: &'a WeightVector,
    pub oracle: &'a Oracle,
    pub model: &'a Model,
    pub certificate: Option<&'a MarginCertificate>,
    pub split: Option<&'a SeparabilitySplit>,
    pub restricted: Option<&'a RestrictedOptimum>,
    pub snapshots: &'a [Snapshot],
    pub final_theta: &'a DVector<f64>,
    /// Set when training aborted.
    pub train_error: Option<&'a str>,
    pub path: Option<std::result::Result<&'a [PathPoint], &'a str>>,
    pub envelope: Option<std::result::Result<&'a EnvelopeReport, &'a str>>,
}

/// Extra output of the generalization check, kept for artifact writing.
#[derive(Debug, Clone, Default)]
pub struct CheckExtras {
    pub sweep: Option<GammaSweep>,
    pub target_error: Option<f64>,
}

pub fn evaluate_checks(state: &RunState) -> (Vec<CheckResult>, CheckExtras) {
    let mut extras = CheckExtras::default();
    let results = state
        .spec
        .checks
        .iter()
        .map(|&c| match c {
            Check::NormGrowth => norm_growth(state),
            Check::Direction => direction(state),
            Check::NonsepLimit => nonsep_limit(state),
            Check::PathMargin => path_margin(state),
            Check::TargetBound => target_bound(state, &mut extras),
            Check::Envelope => envelope(state),
        })
        .collect();
    (results, extras)
}

fn is_linear(state: &RunState) -> bool {
    matches!(state.model, Model::Linear(_))
}

fn training_failed(check: Check, state: &RunState) -> Option<CheckResult> {
    state.train_error.map(|e| CheckResult::new(check, Verdict::Error, format!("training failed: {e}")))
}

fn norm_growth(state: &RunState) -> CheckResult {
    let check = Check::NormGrowth;
    if let Some(r) = training_failed(check, state) {
        return r;
    }
    if is_linear(state) && !state.certificate.is_some_and(MarginCertificate::separable) {
        return CheckResult::new(check, Verdict::Inapplicable, "data is not linearly separable");
    }
    let snaps = state.snapshots;
    let Some(first) = snaps.iter().position(|s| s.separated) else {
        let verdict = if is_linear(state) { Verdict::Fail } else { Verdict::Inapplicable };
        return CheckResult::new(check, verdict, "trajectory never separated the data");
    };
    let non_increasing: Vec<usize> =
        snaps[first..].windows(2).filter(|p| p[1].norm_theta <= p[0].norm_theta).map(|p| p[1].t).collect();
    let last = snaps.last().expect("nonempty trajectory");
    let min_norm = state.spec.options.norm_growth_min_norm;
    let ok = non_increasing.is_empty() && last.norm_theta > min_norm;
    let note = if ok {
        String::new()
    } else if !non_increasing.is_empty() {
        format!("norm failed to increase at t = {:?}", &non_increasing[..non_increasing.len().min(5)])
    } else {
        format!("final norm {} does not exceed {min_norm}", last.norm_theta)
    };
    CheckResult::new(check, if ok { Verdict::Pass } else { Verdict::Fail }, note)
        .metric("first_separated_t", snaps[first].t)
        .metric("final_norm", last.norm_theta)
        .metric("min_norm", min_norm)
        .metric("non_increasing_steps", non_increasing.len())
}

fn direction(state: &RunState) -> CheckResult {
    let check = Check::Direction;
    if let Some(r) = training_failed(check, state) {
        return r;
    }
    if !is_linear(state) {
        return CheckResult::new(check, Verdict::Inapplicable, "direction bound is for linear predictors");
    }
    let Some(cert) = state.certificate.filter(|c| c.separable()) else {
        return CheckResult::new(check, Verdict::Inapplicable, "data is not linearly separable");
    };
    let kl = match generalized_kl(&cert.p_star, state.weights) {
        Ok(kl) => kl,
        Err(e) => return CheckResult::new(check, Verdict::Error, e.to_string()),
    };
    let (n, m) = (state.data.len(), state.weights.bound());
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for s in state.snapshots.iter().filter(|s| s.separated) {
        let Some(gap) = s.dir_gap else { continue };
        let bound = match direction_gap_bound(n, kl, m, s.norm_theta, cert.gamma_star) {
            Ok(b) => b,
            Err(e) => return CheckResult::new(check, Verdict::Error, e.to_string()),
        };
        checked += 1;
        worst_ratio = worst_ratio.max(gap * gap / bound);
        if gap * gap > bound {
            violations.push(s.t);
        }
    }
    let final_gap = state.snapshots.last().and_then(|s| s.dir_gap);
    let verdict = if checked == 0 {
        Verdict::Fail
    } else if violations.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let note = match (checked, violations.first()) {
        (0, _) => "no separated snapshot to check".to_string(),
        (_, Some(t)) => format!("first violation at t = {t}"),
        _ => String::new(),
    };
    CheckResult::new(check, verdict, note)
        .metric("kl", kl)
        .metric("M", m)
        .metric("gamma_star", cert.gamma_star)
        .metric("snapshots_checked", checked)
        .metric("violations", violations.len())
        .metric("worst_gap_sq_over_bound", worst_ratio)
        .metric("final_dir_gap", final_gap.map_or(String::new(), |g| g.to_string()))
}

fn nonsep_limit(state: &RunState) -> CheckResult {
    let check = Check::NonsepLimit;
    if let Some(r) = training_failed(check, state) {
        return r;
    }
    if !is_linear(state) {
        return CheckResult::new(check, Verdict::Inapplicable, "restricted optimum is computed for linear predictors");
    }
    let Some(split) = state.split else {
        return CheckResult::new(check, Verdict::Error, "separability split unavailable");
    };
    if split.nonsep_indices.is_empty() {
        return CheckResult::new(check, Verdict::Inapplicable, "no non-separable samples");
    }
    let Some(opt) = state.restricted else {
        return CheckResult::new(check, Verdict::Error, "restricted optimum unavailable");
    };
    let opts = &state.spec.options;
    let last = state.snapshots.last().expect("nonempty trajectory");
    let Some(final_gap) = last.nonsep_gap else {
        return CheckResult::new(check, Verdict::Error, "trajectory has no nonsep_gap column");
    };
    let report = match nonsep_rate_check(state.snapshots, opt.strong_convexity_omega, opt.log_risk, opts.nonsep_rate_from) {
        Ok(r) => r,
        Err(e) => return CheckResult::new(check, Verdict::Error, e.to_string()),
    };
    let gap_ok = final_gap <= opts.nonsep_tol;
    let ok = gap_ok && report.rate_violations.is_empty();
    let note = if !gap_ok {
        format!("final |P theta - theta_tilde| = {final_gap:e} exceeds {}", opts.nonsep_tol)
    } else if !report.rate_violations.is_empty() {
        format!("rate envelope fails at t = {:?}", &report.rate_violations[..report.rate_violations.len().min(5)])
    } else {
        String::new()
    };
    let mut r = CheckResult::new(check, if ok { Verdict::Pass } else { Verdict::Fail }, note)
        .metric("final_nonsep_gap", final_gap)
        .metric("tol", opts.nonsep_tol)
        .metric("omega", opt.strong_convexity_omega)
        .metric("theta_tilde_norm", opt.theta_tilde.norm())
        .metric("rate_k", report.fitted_k.map_or(String::new(), |k| k.to_string()))
        .metric("rate_violations", report.rate_violations.len())
        .metric("convexity_violations", report.convexity_violations.len());
    if let Some(theta) = state.oracle.conflict_theta {
        r = r.metric("closed_form_theta_tilde", theta);
    }
    r
}

fn path_margin(state: &RunState) -> CheckResult {
    let check = Check::PathMargin;
    let path = match state.path {
        None => return CheckResult::new(check, Verdict::Inapplicable, "no lambda schedule"),
        Some(Err(e)) => return CheckResult::new(check, Verdict::Error, e.to_string()),
        Some(Ok(p)) => p,
    };
    let opts = &state.spec.options;
    let gammas: Vec<f64> = path.iter().map(|p| p.gamma_tilde.unwrap_or(f64::NEG_INFINITY)).collect();
    let drops: Vec<f64> =
        path.windows(2).filter(|w| w[1].gamma_tilde < w[0].gamma_tilde.map(|g| g - opts.path_slack)).map(|w| w[1].lambda).collect();
    let final_gamma = *gammas.last().expect("nonempty path");
    let alpha = state.model.as_predictor().degree();
    let r = state.spec.train.r;

    let (reference, reference_kind) = match (is_linear(state), state.certificate) {
        (true, Some(c)) if c.separable() => (c.gamma_star, "oracle"),
        (true, _) => return CheckResult::new(check, Verdict::Inapplicable, "data is not linearly separable"),
        (false, _) => (gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max), "best_on_path"),
    };
    let floor = match finite_step_margin_floor(opts.path_floor_tau, alpha, r, reference, opts.path_floor_c) {
        Ok(f) => f,
        Err(e) => return CheckResult::new(check, Verdict::Error, e.to_string()),
    };
    let below_floor: Vec<f64> = path.iter().filter(|p| p.gamma_tilde.is_none_or(|g| g < floor)).map(|p| p.lambda).collect();
    let fraction_ok = !is_linear(state) || final_gamma >= opts.path_fraction * reference;
    let ok = drops.is_empty() && below_floor.is_empty() && fraction_ok;
    let note = if !drops.is_empty() {
        format!("margin drops beyond slack at lambda = {drops:?}")
    } else if !fraction_ok {
        format!("final margin {final_gamma} below {} x {reference}", opts.path_fraction)
    } else if !below_floor.is_empty() {
        format!("margin below floor at lambda = {below_floor:?}")
    } else {
        String::new()
    };
    CheckResult::new(check, if ok { Verdict::Pass } else { Verdict::Fail }, note)
        .metric("final_gamma_tilde", final_gamma)
        .metric("reference_gamma", reference)
        .metric("reference_kind", reference_kind)
        .metric("floor", floor)
        .metric(
            "stationary_points",
            path.iter().filter(|p| p.termination == crate::trainer::Termination::Stationarity).count(),
        )
        .metric("path_length", path.len())
}

fn target_bound(state: &RunState, extras: &mut CheckExtras) -> CheckResult {
    let check = Check::TargetBound;
    if let Some(r) = training_failed(check, state) {
        return r;
    }
    let Some(pair) = state.oracle.pair.as_ref().filter(|_| state.data.density_ratios().is_some()) else {
        return CheckResult::new(check, Verdict::Inapplicable, "data carries no density ratios");
    };
    let theta = state.final_theta.as_slice();
    if theta.iter().all(|v| *v == 0.0) {
        return CheckResult::new(check, Verdict::Inapplicable, "theta is zero");
    }
    let opts = &state.spec.options;
    let test = match sample_target(&state.spec.generator, opts.bound_test_samples, state.spec.seed) {
        Ok(t) => t,
        Err(e) => return CheckResult::new(check, Verdict::Error, e.to_string()),
    };
    let predictor = state.model.as_predictor();
    let errors = (0..test.len()).filter(|&i| test.label(i) * predictor.eval(theta, test.row(i)) <= 0.0).count();
    let target_error = errors as f64 / test.len() as f64;
    let c = pooled_sup_norm(&[state.data, &test]);
    let sweep = match optimal_gamma_sweep(state.data, predictor, theta, opts.bound_delta, pair, c) {
        Ok(s) => s,
        Err(e) => return CheckResult::new(check, Verdict::Error, e.to_string()),
    };
    let min_slack = sweep.curve.iter().map(|r| r.total - target_error).fold(f64::INFINITY, f64::min);
    let at_opt = sweep.curve.iter().find(|r| r.gamma_used == sweep.gamma_opt).expect("optimum is on the curve");
    let eps_fraction = at_opt.epsilon / at_opt.total;
    let opt_above_margin = sweep.smallest_positive_margin.is_some_and(|m| sweep.gamma_opt >= m);
    let ok = min_slack >= 0.0;
    let res = CheckResult::new(
        check,
        if ok { Verdict::Pass } else { Verdict::Fail },
        if ok { String::new() } else { format!("bound below target error by {}", -min_slack) },
    )
    .metric("target_error", target_error)
    .metric("test_samples", test.len())
    .metric("C", c)
    .metric("chi2", pair.chi2)
    .metric("gamma_opt", sweep.gamma_opt)
    .metric("total_at_opt", sweep.total_at_opt)
    .metric("term_I_at_opt", at_opt.term_i)
    .metric("term_II_at_opt", at_opt.term_ii)
    .metric("term_II_layerwise_at_opt", at_opt.term_ii_layerwise)
    .metric("epsilon_at_opt", at_opt.epsilon)
    .metric("epsilon_fraction", eps_fraction)
    .metric("smallest_positive_margin", sweep.smallest_positive_margin.map_or(String::new(), |m| m.to_string()))
    .metric("gamma_opt_at_or_above_min_margin", opt_above_margin)
    .metric("min_slack", min_slack)
    .metric("grid_points", sweep.curve.len());
    extras.sweep = Some(sweep);
    extras.target_error = Some(target_error);
    res
}

fn envelope(state: &RunState) -> CheckResult {
    let check = Check::Envelope;
    match state.envelope {
        None => CheckResult::new(check, Verdict::Inapplicable, "no per-step trajectory"),
        Some(Err(e)) => CheckResult::new(check, Verdict::Error, e.to_string()),
        Some(Ok(rep)) => {
            let (verdict, note) = match &rep.verdict {
                EnvelopeVerdict::Inapplicable(why) => (Verdict::Inapplicable, why.clone()),
                EnvelopeVerdict::Checked if rep.passed() => (Verdict::Pass, String::new()),
                EnvelopeVerdict::Checked => (Verdict::Fail, format!("violations at t = {:?}", &rep.violations()[..rep.violations().len().min(5)])),
            };
            CheckResult::new(check, verdict, note)
                .metric("steps_checked", rep.steps_checked)
                .metric("risk_violations", rep.risk_violations.len())
                .metric("norm_violations", rep.norm_violations.len())
                .metric("max_violation", rep.max_violation)
        }
    }
}
