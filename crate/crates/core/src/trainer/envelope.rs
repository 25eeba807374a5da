use super::Trajectory;

const LOG_TOL: f64 = 1e-12;
const NORM_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeVerdict {
    Checked,
    /// The run does not meet the preconditions; nothing was checked.
    Inapplicable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub verdict: EnvelopeVerdict,
    /// Steps `t` where the bound on `L(theta_{t+1})` fails.
    pub risk_violations: Vec<usize>,
    /// Steps `t` where `||theta_{t+1}|| <= sum_{j<=t} a_j b_j` fails.
    pub norm_violations: Vec<usize>,
    /// Largest excess, in log units for the risk bound and relative units for the norm bound.
    pub max_violation: f64,
    pub steps_checked: usize,
}

impl EnvelopeReport {
    pub fn violations(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.risk_violations.iter().chain(&self.norm_violations).copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn passed(&self) -> bool {
        self.verdict == EnvelopeVerdict::Checked && self.risk_violations.is_empty() && self.norm_violations.is_empty()
    }

    fn inapplicable(reason: impl Into<String>) -> Self {
        Self {
            verdict: EnvelopeVerdict::Inapplicable(reason.into()),
            risk_violations: Vec::new(),
            norm_violations: Vec::new(),
            max_violation: 0.0,
            steps_checked: 0,
        }
    }
}

/// Checks, for each recorded step,
/// `L(theta_{t+1}) <= L(theta_t) (1 - a_t (1 - a_t/2) b_t^2)` and
/// `||theta_{t+1}|| <= sum_{j<=t} a_j b_j`.
///
/// Needs an unregularized linear run from the origin, logged at every step, with
/// `a_t <= 1` and features inside the unit ball.
pub fn boosting_envelope_check(tr: &Trajectory) -> EnvelopeReport {
    let meta = &tr.meta;
    if meta.lambda != 0.0 {
        return EnvelopeReport::inapplicable("run is regularized");
    }
    if !meta.linear {
        return EnvelopeReport::inapplicable("predictor is not linear");
    }
    if !meta.every_step {
        return EnvelopeReport::inapplicable("trajectory is not logged at every step");
    }
    if meta.max_feature_norm > 1.0 {
        return EnvelopeReport::inapplicable(format!("max feature norm {} exceeds 1", meta.max_feature_norm));
    }
    let snaps = &tr.snapshots;
    if snaps.first().is_none_or(|s| s.t != 0 || s.norm_theta != 0.0) {
        return EnvelopeReport::inapplicable("run does not start at the origin");
    }
    if snaps.windows(2).any(|p| p[1].t != p[0].t + 1) {
        return EnvelopeReport::inapplicable("trajectory has gaps");
    }
    if let Some(s) = snaps[..snaps.len() - 1].iter().find(|s| s.log_a_t > 0.0) {
        return EnvelopeReport::inapplicable(format!("a_t = {} > 1 at step {}", s.a_t, s.t));
    }

    let mut report = EnvelopeReport {
        verdict: EnvelopeVerdict::Checked,
        risk_violations: Vec::new(),
        norm_violations: Vec::new(),
        max_violation: 0.0,
        steps_checked: snaps.len() - 1,
    };
    // running log of sum_{j<=t} a_j b_j
    let mut log_path = f64::NEG_INFINITY;
    for pair in snaps.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        let a = cur.a_t;
        let factor = -(a * (1.0 - 0.5 * a)) * (2.0 * cur.log_b_t).exp();
        let bound = cur.log_risk + factor.ln_1p();
        let excess = next.log_risk - bound;
        if excess > LOG_TOL * (1.0 + bound.abs()) {
            report.risk_violations.push(cur.t);
            report.max_violation = report.max_violation.max(excess);
        }

        log_path = crate::risk::log_add_exp(log_path, cur.log_a_t + cur.log_b_t);
        if next.norm_theta > 0.0 {
            let rel = next.norm_theta.ln() - log_path;
            if rel > NORM_REL_TOL {
                report.norm_violations.push(cur.t);
                report.max_violation = report.max_violation.max(rel);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, WeightVector};
    use crate::predictors::LinearPredictor;
    use crate::trainer::{train, Attachments, SnapshotCadence, TrainConfig};

    fn run(eta: f64, steps: usize) -> Trajectory {
        let data = Dataset::new(vec![vec![1.0]], vec![1.0], None).unwrap();
        let cfg = TrainConfig { eta0: eta, max_steps: steps, cadence: SnapshotCadence::Every(1), ..Default::default() };
        train(&LinearPredictor::new(1), &data, &WeightVector::uniform(1), &cfg, &Attachments::default()).unwrap()
    }

    #[test]
    fn single_sample_first_step() {
        let tr = run(1.0, 1);
        // bound 1 * (1 - 1 * 0.5 * 1) = 0.5, actual e^-1
        assert!((tr.snapshots[1].log_risk + 1.0).abs() < 1e-15);
        let rep = boosting_envelope_check(&tr);
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.steps_checked, 1);
    }

    #[test]
    fn long_run_has_no_violations() {
        let rep = boosting_envelope_check(&run(0.9, 2000));
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn large_step_is_inapplicable() {
        let mut tr = run(1.0, 3);
        tr.snapshots[1].a_t = 1.5;
        tr.snapshots[1].log_a_t = 1.5f64.ln();
        assert!(matches!(boosting_envelope_check(&tr).verdict, EnvelopeVerdict::Inapplicable(_)));
    }
}
