//! Weighted empirical risk `(1/n) sum_i w_i l(y_i f(theta, x_i)) + lambda ||theta||^r`
//! and its gradient, both assembled in log-space.
//!
//! Gradient descent on separable data drives `||theta||` to infinity, so raw
//! risks underflow long before training ends. Everything downstream reads
//! `log_risk`; `risk` is only a convenience view.

use nalgebra::DVector;

use crate::data::{norm, Dataset, WeightVector};
use crate::error::{LabError, Result};
use crate::loss::LossKind;
use crate::predictors::Predictor;

/// Below this, `exp(log_risk)` is zero in double precision.
pub const UNDERFLOW_LOG: f64 = -745.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue {
    pub log_risk: f64,
    pub risk: f64,
    /// `risk` is reported as 0 because `log_risk < -745`.
    pub underflow: bool,
}

impl RiskValue {
    pub fn from_log(log_risk: f64) -> Self {
        if log_risk < UNDERFLOW_LOG {
            Self { log_risk, risk: 0.0, underflow: true }
        } else {
            Self { log_risk, risk: log_risk.exp(), underflow: false }
        }
    }
}

/// Max-shifted `log(sum_i exp(t_i))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// One pass over the data: objective, gradient and the margin summary.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_risk: f64,
    pub gradient: DVector<f64>,
    /// `log ||grad||`, accurate even when the gradient itself underflows.
    pub log_grad_norm: f64,
    /// Unnormalized `y_i f(theta, x_i)`.
    pub margins: Vec<f64>,
    /// `gradient = exp(log_scale) * direction`, with `direction` of moderate size.
    pub direction: DVector<f64>,
    pub log_scale: f64,
}

impl Evaluation {
    pub fn risk(&self) -> RiskValue {
        RiskValue::from_log(self.log_risk)
    }

    pub fn grad_norm(&self) -> f64 {
        self.log_grad_norm.exp()
    }

    pub fn separated(&self) -> bool {
        self.margins.iter().all(|&m| m > 0.0)
    }
}

/// The regularized weighted risk `L_lambda(.; w)` for a fixed predictor and dataset.
#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub predictor: &'a dyn Predictor,
    pub data: &'a Dataset,
    pub weights: &'a WeightVector,
    pub loss: LossKind,
    pub lambda: f64,
    pub r: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        predictor: &'a dyn Predictor,
        data: &'a Dataset,
        weights: &'a WeightVector,
        loss: LossKind,
        lambda: f64,
        r: f64,
    ) -> Result<Self> {
        if data.dim() != predictor.input_dim() {
            return Err(LabError::structural(format!(
                "data has {} features, predictor expects {}",
                data.dim(),
                predictor.input_dim()
            )));
        }
        if weights.len() != data.len() {
            return Err(LabError::structural(format!(
                "{} weights for {} samples",
                weights.len(),
                data.len()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LabError::domain(format!("lambda = {lambda} must be >= 0")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(LabError::domain(format!("r = {r} must be > 0")));
        }
        Ok(Self { predictor, data, weights, loss, lambda, r })
    }

    pub fn unregularized(
        predictor: &'a dyn Predictor,
        data: &'a Dataset,
        weights: &'a WeightVector,
        loss: LossKind,
    ) -> Result<Self> {
        Self::new(predictor, data, weights, loss, 0.0, 2.0)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.predictor.num_params() {
            return Err(LabError::structural(format!(
                "theta has length {}, predictor needs {}",
                theta.len(),
                self.predictor.num_params()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Numeric("theta has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn margins(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let margins: Vec<f64> = self
            .data
            .rows()
            .enumerate()
            .map(|(i, x)| self.data.label(i) * self.predictor.eval(theta, x))
            .collect();
        if margins.iter().any(|m| !m.is_finite()) {
            return Err(LabError::Numeric("non-finite margin".into()));
        }
        Ok(margins)
    }

    fn log_data_risk(&self, margins: &[f64]) -> f64 {
        let log_n = (margins.len() as f64).ln();
        let terms: Vec<f64> = margins
            .iter()
            .zip(self.weights.as_slice())
            .map(|(&u, &w)| w.ln() + self.loss.log_value(u) - log_n)
            .collect();
        log_sum_exp(&terms)
    }

    fn log_objective(&self, theta: &[f64], margins: &[f64]) -> f64 {
        let log_data = self.log_data_risk(margins);
        let reg = self.lambda * norm(theta).powf(self.r);
        if reg > 0.0 {
            log_add_exp(log_data, reg.ln())
        } else {
            log_data
        }
    }

    pub fn risk(&self, theta: &[f64]) -> Result<RiskValue> {
        let margins = self.margins(theta)?;
        Ok(RiskValue::from_log(self.log_objective(theta, &margins)))
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.evaluate(theta)?.gradient)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let margins = self.margins(theta)?;
        let log_risk = self.log_objective(theta, &margins);

        let log_n = (margins.len() as f64).ln();
        let log_coef: Vec<f64> = margins
            .iter()
            .zip(self.weights.as_slice())
            .map(|(&u, &w)| w.ln() + self.loss.log_neg_derivative(u) - log_n)
            .collect();
        let shift = log_coef.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        // scaled gradient: grad_data = exp(shift) * g
        let mut g = DVector::zeros(self.predictor.num_params());
        for (i, x) in self.data.rows().enumerate() {
            let c = (log_coef[i] - shift).exp();
            if c == 0.0 {
                continue;
            }
            self.predictor
                .accumulate_grad(theta, x, -c * self.data.label(i), g.as_mut_slice());
        }
        let g_norm = g.norm();
        let scale = shift.exp();

        let theta_norm = norm(theta);
        let reg_active = self.lambda > 0.0 && theta_norm > 0.0;
        let (gradient, log_grad_norm, direction, log_scale) = if reg_active {
            let reg_coef = self.lambda * self.r * theta_norm.powf(self.r - 2.0);
            let total = &g * scale + DVector::from_column_slice(theta) * reg_coef;
            let n = total.norm();
            (total.clone(), n.ln(), total, 0.0)
        } else {
            (&g * scale, shift + g_norm.ln(), g, shift)
        };
        if gradient.iter().any(|v| !v.is_finite()) || direction.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Numeric("non-finite gradient".into()));
        }
        Ok(Evaluation { log_risk, gradient, log_grad_norm, margins, direction, log_scale })
    }
}

pub fn weighted_risk(
    predictor: &dyn Predictor,
    theta: &[f64],
    data: &Dataset,
    w: &WeightVector,
    loss: LossKind,
    lambda: f64,
    r: f64,
) -> Result<RiskValue> {
    Objective::new(predictor, data, w, loss, lambda, r)?.risk(theta)
}

pub fn weighted_risk_gradient(
    predictor: &dyn Predictor,
    theta: &[f64],
    data: &Dataset,
    w: &WeightVector,
    loss: LossKind,
    lambda: f64,
    r: f64,
) -> Result<DVector<f64>> {
    Objective::new(predictor, data, w, loss, lambda, r)?.gradient(theta)
}

pub(crate) const SIMPLEX_TOL: f64 = 1e-9;

pub(crate) fn check_simplex(p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < -SIMPLEX_TOL) {
        return Err(LabError::domain("probability vector has negative or non-finite entries"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(LabError::domain(format!("probability vector sums to {total}, not 1")));
    }
    Ok(())
}

/// `sum_{p_i > 0} p_i log(p_i / w_i)` against the raw, unnormalized weights.
pub fn generalized_kl(p: &[f64], w: &WeightVector) -> Result<f64> {
    if p.len() != w.len() {
        return Err(LabError::structural(format!("p has {} entries, w has {}", p.len(), w.len())));
    }
    check_simplex(p)?;
    Ok(p
        .iter()
        .zip(w.as_slice())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &wi)| pi * (pi / wi).ln())
        .sum())
}
