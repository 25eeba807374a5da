//! Margin losses with exponential tails, evaluated in log-space.

/// Loss `l(u)` applied to the signed margin `u = y f(theta, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LossKind {
    /// `exp(-u)`
    #[default]
    Exponential,
    /// `log(1 + exp(-u))`
    Logistic,
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl LossKind {
    pub fn value(self, u: f64) -> f64 {
        match self {
            LossKind::Exponential => (-u).exp(),
            LossKind::Logistic => softplus(-u),
        }
    }

    /// `log l(u)`, finite for every finite `u` even when `l(u)` underflows.
    pub fn log_value(self, u: f64) -> f64 {
        match self {
            LossKind::Exponential => -u,
            LossKind::Logistic => {
                if u > 30.0 {
                    // log(log1p(e)) = -u + log1p(-e/2 + e^2/3 - ...)
                    let e = (-u).exp();
                    -u + (-0.5 * e + e * e / 3.0).ln_1p()
                } else {
                    softplus(-u).ln()
                }
            }
        }
    }

    /// `l'(u)`; always negative.
    pub fn derivative(self, u: f64) -> f64 {
        -self.log_neg_derivative(u).exp()
    }

    /// `log(-l'(u))`.
    pub fn log_neg_derivative(self, u: f64) -> f64 {
        match self {
            LossKind::Exponential => -u,
            LossKind::Logistic => -softplus(u),
        }
    }

    pub fn second_derivative(self, u: f64) -> f64 {
        match self {
            LossKind::Exponential => (-u).exp(),
            LossKind::Logistic => (-softplus(u) - softplus(-u)).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Exponential => "exponential",
            LossKind::Logistic => "logistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Some(LossKind::Exponential),
            "logistic" | "log" => Some(LossKind::Logistic),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_matches_naive_in_safe_range() {
        for u in [-20.0f64, -3.0, -0.5, 0.0, 0.7, 5.0, 29.0, 31.0, 35.0] {
            let naive = (-u).exp().ln_1p();
            let l = LossKind::Logistic;
            assert!((l.value(u) - naive).abs() <= 1e-13 * naive, "u={u}");
            assert!((l.log_value(u) - naive.ln()).abs() < 1e-12, "u={u}");
            let d = -(-u).exp() / (1.0 + (-u).exp());
            assert!((l.derivative(u) - d).abs() < 1e-15, "u={u}");
        }
    }

    #[test]
    fn log_value_survives_large_margins() {
        for loss in [LossKind::Exponential, LossKind::Logistic] {
            let lv = loss.log_value(800.0);
            assert!(lv.is_finite());
            assert!((lv + 800.0).abs() < 1e-12);
            assert!((loss.log_neg_derivative(800.0) + 800.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_derivative_by_differences() {
        for loss in [LossKind::Exponential, LossKind::Logistic] {
            for &u in &[-2.0, 0.0, 1.3, 4.0] {
                let h = 1e-5;
                let fd = (loss.derivative(u + h) - loss.derivative(u - h)) / (2.0 * h);
                assert!((fd - loss.second_derivative(u)).abs() < 1e-8);
            }
        }
    }
}
