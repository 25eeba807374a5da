use crate::data::WeightVector;
use crate::error::{LabError, Result};
use crate::risk::{check_simplex, generalized_kl, log_sum_exp};
use crate::trainer::Snapshot;

/// Upper bound on `||theta/||theta|| - theta*||^2` for a linear run:
/// `2 (log n + kl + M) / (||theta|| gamma*)`.
pub fn direction_gap_bound(n: usize, kl: f64, m: f64, norm_theta: f64, gamma_star: f64) -> Result<f64> {
    if n == 0 {
        return Err(LabError::domain("n must be positive"));
    }
    if !(norm_theta > 0.0) {
        return Err(LabError::domain(format!("norm_theta = {norm_theta} must be positive")));
    }
    if !(gamma_star > 0.0) {
        return Err(LabError::domain(format!("gamma_star = {gamma_star} must be positive")));
    }
    Ok(2.0 * ((n as f64).ln() + kl + m) / (norm_theta * gamma_star))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FenchelCheck {
    pub numeric: f64,
    pub closed_form: f64,
    pub abs_diff: f64,
    pub iterations: usize,
}

const FENCHEL_GRAD_TOL: f64 = 1e-10;
const FENCHEL_MAX_ITERS: usize = 5_000_000;

/// Conjugate of `g(u) = log((1/n) sum_i w_i exp(u_i))` at `p`, by gradient ascent
/// with unit step, against `log n + D_KL(p || w)`.
///
/// Zero entries of `p` send the matching `u_i` to `-inf`; the ascent runs on the support.
pub fn fenchel_identity_check(p: &[f64], w: &WeightVector) -> Result<FenchelCheck> {
    if p.len() != w.len() {
        return Err(LabError::structural("p and w lengths differ"));
    }
    check_simplex(p)?;
    let closed_form = (p.len() as f64).ln() + generalized_kl(p, w)?;

    let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let ps: Vec<f64> = support.iter().map(|&i| p[i]).collect();
    let log_w: Vec<f64> = support.iter().map(|&i| w.as_slice()[i].ln()).collect();
    let log_n = (p.len() as f64).ln();
    let mut u = vec![0.0; support.len()];
    let mut iterations = 0;
    let objective = loop {
        let logits: Vec<f64> = u.iter().zip(&log_w).map(|(a, b)| a + b).collect();
        let lse = log_sum_exp(&logits);
        let grad: Vec<f64> = ps.iter().zip(&logits).map(|(pi, l)| pi - (l - lse).exp()).collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let value = ps.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - (lse - log_n);
        if gnorm <= FENCHEL_GRAD_TOL || iterations >= FENCHEL_MAX_ITERS {
            break value;
        }
        for (ui, gi) in u.iter_mut().zip(&grad) {
            *ui += gi;
        }
        iterations += 1;
    };
    Ok(FenchelCheck { numeric: objective, closed_form, abs_diff: (objective - closed_form).abs(), iterations })
}

/// Normalized-margin floor `c gamma* / tau^(alpha/r)` for an approximate minimizer
/// of the regularized objective within a factor `tau` of optimal.
pub fn finite_step_margin_floor(tau: f64, alpha: f64, r: f64, gamma_star: f64, c: f64) -> Result<f64> {
    if !(tau > 1.0 && tau <= 2.0) {
        return Err(LabError::domain(format!("tau = {tau} outside (1, 2]")));
    }
    if !(0.1..1.0).contains(&c) {
        return Err(LabError::domain(format!("c = {c} outside [0.1, 1)")));
    }
    if !(alpha > 0.0 && r > 0.0) {
        return Err(LabError::domain("alpha and r must be positive"));
    }
    Ok(c * gamma_star / tau.powf(alpha / r))
}

/// One row of the non-separable convergence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonsepRateRow {
    pub t: usize,
    pub nonsep_gap: f64,
    /// `(2/omega) (L(theta_t) - L(theta_tilde))`.
    pub strong_convexity_bound: f64,
    pub strong_convexity_ok: bool,
    /// `K log^2 t / t`, present for `t >= t0`.
    pub rate_envelope: Option<f64>,
    pub rate_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonsepRateReport {
    pub rows: Vec<NonsepRateRow>,
    /// Envelope constant fitted at the first snapshot with `t >= t0`.
    pub fitted_k: Option<f64>,
    pub rate_violations: Vec<usize>,
    /// Strong-convexity violations once `nonsep_gap < 0.1`.
    pub convexity_violations: Vec<usize>,
}

/// Absolute slack for the rate envelope once the gap reaches rounding level.
pub const RATE_FLOOR: f64 = 1e-12;

/// Checks snapshots against the strong-convexity chain and a `log^2 t / t` envelope.
pub fn nonsep_rate_check(snapshots: &[Snapshot], omega: f64, log_risk_opt: f64, t0: usize) -> Result<NonsepRateReport> {
    if !(omega > 0.0) {
        return Err(LabError::domain("omega must be positive"));
    }
    let rate = |t: usize| {
        let tf = t as f64;
        tf.ln().powi(2) / tf
    };
    let fitted_k = snapshots
        .iter()
        .find(|s| s.t >= t0.max(2) && s.nonsep_gap.is_some())
        .map(|s| s.nonsep_gap.unwrap() / rate(s.t));
    let mut rows = Vec::new();
    let mut rate_violations = Vec::new();
    let mut convexity_violations = Vec::new();
    for s in snapshots {
        let Some(gap) = s.nonsep_gap else { continue };
        // L(theta_t) - L_opt, via exp_m1 to keep precision near the optimum
        let excess = log_risk_opt.exp() * (s.log_risk - log_risk_opt).exp_m1();
        let bound = 2.0 / omega * excess.max(0.0);
        let convex_ok = gap * gap <= bound * (1.0 + 1e-9) + 1e-24;
        if !convex_ok && gap < 0.1 {
            convexity_violations.push(s.t);
        }
        let (rate_envelope, rate_ok) = match fitted_k {
            Some(k) if s.t >= t0.max(2) => {
                let env = k * rate(s.t);
                let ok = gap <= env * (1.0 + 1e-9) + RATE_FLOOR;
                if !ok {
                    rate_violations.push(s.t);
                }
                (Some(env), ok)
            }
            _ => (None, true),
        };
        rows.push(NonsepRateRow {
            t: s.t,
            nonsep_gap: gap,
            strong_convexity_bound: bound,
            strong_convexity_ok: convex_ok,
            rate_envelope,
            rate_ok,
        });
    }
    Ok(NonsepRateReport { rows, fitted_k, rate_violations, convexity_violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_bound_arithmetic() {
        let b = direction_gap_bound(2, 0.0, 1.0, 10.0, 1.0).unwrap();
        assert!((b - 0.338_629_436_111_989).abs() < 1e-14);
        let b2 = direction_gap_bound(2, 0.0, 1.0, 20.0, 1.0).unwrap();
        assert_eq!(b2 * 2.0, b);
        assert!(direction_gap_bound(2, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(direction_gap_bound(2, 0.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn gap_bound_uniform_case() {
        let n = 4;
        let kl = generalized_kl(&[0.25; 4], &WeightVector::uniform(n)).unwrap();
        let b = direction_gap_bound(n, kl, 3.0, 5.0, 0.5).unwrap();
        assert!((b - 2.0 * 3.0 / (5.0 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn fenchel_small_cases() {
        let c = fenchel_identity_check(&[1.0], &WeightVector::new(vec![3.0], 3.0).unwrap()).unwrap();
        assert!((c.closed_form + 3f64.ln()).abs() < 1e-15);
        assert!(c.abs_diff < 1e-12);
        let c = fenchel_identity_check(&[0.5, 0.5], &WeightVector::uniform(2)).unwrap();
        assert!(c.closed_form.abs() < 1e-15 && c.numeric.abs() < 1e-12);
        let w = WeightVector::new(vec![2.0, 0.5, 1.0], 2.0).unwrap();
        let c = fenchel_identity_check(&[0.7, 0.1, 0.2], &w).unwrap();
        assert!(c.abs_diff < 1e-9, "{c:?}");
        let c = fenchel_identity_check(&[0.6, 0.0, 0.4], &w).unwrap();
        assert!(c.abs_diff < 1e-9, "{c:?}");
    }

    #[test]
    fn margin_floor_arithmetic() {
        let f = finite_step_margin_floor(2.0, 1.0, 2.0, 1.0, 0.1).unwrap();
        assert!((f - 0.070_710_678_118_654_75).abs() < 1e-15);
        let f = finite_step_margin_floor(2.0, 2.0, 2.0, 0.5, 0.1).unwrap();
        assert!((f - 0.025).abs() < 1e-15);
        let f = finite_step_margin_floor(1.0 + 1e-12, 1.0, 2.0, 0.8, 0.999_999).unwrap();
        assert!((f - 0.8).abs() < 1e-6);
        assert!(finite_step_margin_floor(2.5, 1.0, 2.0, 1.0, 0.1).is_err());
        assert!(finite_step_margin_floor(1.0, 1.0, 2.0, 1.0, 0.1).is_err());
        assert!(finite_step_margin_floor(2.0, 1.0, 2.0, 1.0, 1.0).is_err());
    }
}
