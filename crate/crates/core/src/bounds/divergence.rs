use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LabError, Result};
use crate::risk::log_sum_exp;

/// Multivariate normal with a precomputed Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(LabError::structural("mean and covariance dimensions differ"));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| LabError::domain("covariance is not positive definite"))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self { mean: DVector::from_vec(mean), cov, chol, log_norm })
    }

    /// `N(mean, sigma^2 I)`.
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(LabError::domain("sigma must be positive"));
        }
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * (sigma * sigma))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self.chol.l().solve_lower_triangular(&diff).expect("factor is nonsingular");
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v
        });
        (&self.mean + self.chol.l() * z).as_slice().to_vec()
    }

    /// `(mu_b - mu_a)^T Sigma^-1 (mu_b - mu_a)` using this covariance.
    fn mahalanobis_sq(&self, other_mean: &DVector<f64>) -> f64 {
        let diff = other_mean - &self.mean;
        self.chol.l().solve_lower_triangular(&diff).expect("factor is nonsingular").norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    Gaussian(Gaussian),
    /// Components with positive weights summing to 1.
    Mixture(Vec<(f64, Gaussian)>),
}

impl DistSpec {
    pub fn mixture(components: Vec<(f64, Gaussian)>) -> Result<Self> {
        if components.is_empty() {
            return Err(LabError::domain("mixture needs at least one component"));
        }
        let d = components[0].1.dim();
        if components.iter().any(|(w, g)| !(*w > 0.0) || g.dim() != d) {
            return Err(LabError::domain("mixture weights must be positive and dimensions equal"));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        Ok(DistSpec::Mixture(components.into_iter().map(|(w, g)| (w / total, g)).collect()))
    }

    pub fn dim(&self) -> usize {
        match self {
            DistSpec::Gaussian(g) => g.dim(),
            DistSpec::Mixture(c) => c[0].1.dim(),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            DistSpec::Gaussian(g) => g.log_density(x),
            DistSpec::Mixture(c) => {
                let terms: Vec<f64> = c.iter().map(|(w, g)| w.ln() + g.log_density(x)).collect();
                log_sum_exp(&terms)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DistSpec::Gaussian(g) => g.sample(rng),
            DistSpec::Mixture(c) => {
                let idx = WeightedIndex::new(c.iter().map(|(w, _)| *w)).expect("validated weights");
                c[idx.sample(rng)].1.sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chi2Method {
    ClosedForm,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Estimate {
    pub value: f64,
    /// Present for Monte Carlo estimates.
    pub std_error: Option<f64>,
    pub method: Chi2Method,
    /// Set when a closed form was requested but not available.
    pub notice: Option<String>,
}

/// Source/target pair with its chi-square divergence `int (p_t/p_s)^2 dP_s - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub source: DistSpec,
    pub target: DistSpec,
    pub chi2: f64,
    pub chi2_std_error: Option<f64>,
    pub chi2_method: Chi2Method,
    pub notice: Option<String>,
}

impl DensityPair {
    pub fn new(source: DistSpec, target: DistSpec, method: Chi2Method) -> Result<Self> {
        let est = chi2_divergence(&source, &target, method)?;
        Ok(Self {
            source,
            target,
            chi2: est.value,
            chi2_std_error: est.std_error,
            chi2_method: est.method,
            notice: est.notice,
        })
    }

    /// `p_t(x) / p_s(x)`.
    pub fn ratio(&self, x: &[f64]) -> f64 {
        (self.target.log_density(x) - self.source.log_density(x)).exp()
    }
}

const MC_FALLBACK_SAMPLES: usize = 1_000_000;

pub fn chi2_divergence(source: &DistSpec, target: &DistSpec, method: Chi2Method) -> Result<Chi2Estimate> {
    if source.dim() != target.dim() {
        return Err(LabError::structural("source and target dimensions differ"));
    }
    match method {
        Chi2Method::ClosedForm => match (source, target) {
            (DistSpec::Gaussian(s), DistSpec::Gaussian(t))
                if (s.cov() - t.cov()).amax() <= 1e-12 * s.cov().amax().max(1.0) =>
            {
                Ok(Chi2Estimate {
                    value: s.mahalanobis_sq(&t.mean).exp_m1(),
                    std_error: None,
                    method,
                    notice: None,
                })
            }
            _ => {
                let mut est = monte_carlo(source, target, MC_FALLBACK_SAMPLES, 0);
                est.notice = Some("no closed form for this pair; used Monte Carlo".into());
                Ok(est)
            }
        },
        Chi2Method::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(LabError::domain("Monte Carlo needs at least two samples"));
            }
            Ok(monte_carlo(source, target, samples, seed))
        }
    }
}

fn monte_carlo(source: &DistSpec, target: &DistSpec, samples: usize, seed: u64) -> Chi2Estimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..samples {
        let x = source.sample(&mut rng);
        let r = (2.0 * (target.log_density(&x) - source.log_density(&x))).exp();
        let delta = r - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (r - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Chi2Estimate {
        value: mean - 1.0,
        std_error: Some((var / samples as f64).sqrt()),
        method: Chi2Method::MonteCarlo { samples, seed },
        notice: None,
    }
}
