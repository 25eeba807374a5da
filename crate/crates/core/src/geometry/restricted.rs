use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, WeightVector};
use crate::error::{LabError, Result};
use crate::loss::LossKind;
use crate::risk::log_sum_exp;

pub const RANK_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-9;
const SINGULAR_RATIO: f64 = 1e-13;
const MAX_NEWTON_STEPS: usize = 500;
const POLISH_STEPS: usize = 4;

/// Minimizer of the weighted risk over the span of the non-separable features.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedOptimum {
    pub theta_tilde: DVector<f64>,
    pub strong_convexity_omega: f64,
    pub optim_residual: f64,
    /// Orthonormal columns spanning the non-separable features.
    pub basis: DMatrix<f64>,
    /// Log of the restricted risk at the optimum, normalized by the full sample count.
    pub log_risk: f64,
    pub iterations: usize,
}

/// Orthonormal basis (as columns) of `span{vectors}` by modified Gram-Schmidt with
/// one reorthogonalization pass.
pub fn span_basis(vectors: &[&[f64]], dim: usize) -> Result<DMatrix<f64>> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        if v.len() != dim {
            return Err(LabError::structural("span vector has the wrong dimension"));
        }
        let v = DVector::from_column_slice(v);
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut u = v;
        for _ in 0..2 {
            for q in &cols {
                let c = q.dot(&u);
                u.axpy(-c, q, 1.0);
            }
        }
        let r = u.norm();
        if r > RANK_TOL * scale.max(1.0) {
            cols.push(u / r);
        }
    }
    Ok(if cols.is_empty() { DMatrix::zeros(dim, 0) } else { DMatrix::from_columns(&cols) })
}

/// Orthogonal projection of `theta` onto the column span of an orthonormal `basis`.
pub fn project_span(theta: &[f64], basis: &DMatrix<f64>) -> Result<DVector<f64>> {
    if theta.len() != basis.nrows() {
        return Err(LabError::structural("vector and basis dimensions differ"));
    }
    let k = basis.ncols();
    let gram = basis.transpose() * basis;
    let off = (gram - DMatrix::<f64>::identity(k, k)).amax();
    if off > ORTHONORMAL_TOL {
        return Err(LabError::domain(format!("basis is not orthonormal (max deviation {off:e})")));
    }
    let t = DVector::from_column_slice(theta);
    Ok(basis * (basis.transpose() * t))
}

struct Restricted<'a> {
    /// Rows `y_i B^T x_i` for the non-separable samples.
    coords: Vec<DVector<f64>>,
    weights: Vec<f64>,
    loss: LossKind,
    n_total: f64,
    _data: &'a Dataset,
}

impl Restricted<'_> {
    fn log_value(&self, c: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self
            .coords
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w.ln() + self.loss.log_value(a.dot(c)))
            .collect();
        log_sum_exp(&terms) - self.n_total.ln()
    }

    fn grad_hess(&self, c: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = c.len();
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for (a, w) in self.coords.iter().zip(&self.weights) {
            let u = a.dot(c);
            g.axpy(w * self.loss.derivative(u) / self.n_total, a, 1.0);
            h.ger(w * self.loss.second_derivative(u) / self.n_total, a, a, 1.0);
        }
        (g, h)
    }
}

fn eigen_extremes(h: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(h.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Minimizes `(1/n) sum_{i in nonsep} w_i l(y_i theta^T x_i)` over the span of the
/// non-separable features, starting from the origin.
pub fn nonsep_optimum(data: &Dataset, nonsep: &[usize], w: &WeightVector, loss: LossKind) -> Result<RestrictedOptimum> {
    nonsep_optimum_from(data, nonsep, w, loss, None)
}

/// As [`nonsep_optimum`], started from the projection of `start` onto the span.
pub fn nonsep_optimum_from(
    data: &Dataset,
    nonsep: &[usize],
    w: &WeightVector,
    loss: LossKind,
    start: Option<&[f64]>,
) -> Result<RestrictedOptimum> {
    if nonsep.is_empty() {
        return Err(LabError::domain("no non-separable samples"));
    }
    if w.len() != data.len() {
        return Err(LabError::structural("weight vector length differs from sample count"));
    }
    if let Some(&i) = nonsep.iter().find(|&&i| i >= data.len()) {
        return Err(LabError::structural(format!("index {i} out of range")));
    }
    let rows: Vec<&[f64]> = nonsep.iter().map(|&i| data.row(i)).collect();
    let basis = span_basis(&rows, data.dim())?;
    if basis.ncols() == 0 {
        return Err(LabError::Degenerate("non-separable features span only the origin".into()));
    }
    let bt = basis.transpose();
    let problem = Restricted {
        coords: nonsep
            .iter()
            .map(|&i| &bt * DVector::from_column_slice(data.row(i)) * data.label(i))
            .collect(),
        weights: nonsep.iter().map(|&i| w.as_slice()[i]).collect(),
        loss,
        n_total: data.len() as f64,
        _data: data,
    };

    let mut c = match start {
        Some(s) => {
            if s.len() != data.dim() {
                return Err(LabError::structural("start vector has the wrong dimension"));
            }
            &bt * DVector::from_column_slice(s)
        }
        None => DVector::zeros(basis.ncols()),
    };
    let mut f = problem.log_value(&c);
    let mut iterations = 0;
    loop {
        let (g, h) = problem.grad_hess(&c);
        let gnorm = g.norm();
        if !gnorm.is_finite() {
            return Err(LabError::Numeric("non-finite gradient in restricted Newton".into()));
        }
        if gnorm <= RESIDUAL_TOL {
            let (c, gnorm, h) = polish(&problem, c, g, h);
            let f = problem.log_value(&c);
            let (min, max) = eigen_extremes(&h);
            if min <= SINGULAR_RATIO * max.abs().max(f64::MIN_POSITIVE) {
                return Err(LabError::Singular { condition: max / min.max(f64::MIN_POSITIVE) });
            }
            return Ok(RestrictedOptimum {
                theta_tilde: &basis * &c,
                strong_convexity_omega: min,
                optim_residual: gnorm,
                basis,
                log_risk: f,
                iterations,
            });
        }
        if iterations >= MAX_NEWTON_STEPS {
            return Err(LabError::Numeric(format!(
                "restricted Newton stopped after {iterations} steps at gradient norm {gnorm:e}"
            )));
        }
        iterations += 1;
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                let (min, max) = eigen_extremes(&h);
                if min <= SINGULAR_RATIO * max.abs().max(f64::MIN_POSITIVE) {
                    return Err(LabError::Singular { condition: max / min.max(f64::MIN_POSITIVE) });
                }
                -&g
            }
        };
        // Armijo backtracking on the risk itself (ratios via log values)
        let slope = g.dot(&step);
        let risk = f.exp();
        let mut t = 1.0;
        loop {
            let trial = &c + &step * t;
            let ft = problem.log_value(&trial);
            if ft.is_finite() && (ft - f).exp_m1() * risk <= 1e-4 * t * slope + 1e-15 * risk {
                c = trial;
                f = ft;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                // no decrease is representable; accept the full Newton point if it is not worse
                let trial = &c + &step;
                let ft = problem.log_value(&trial);
                if ft <= f {
                    c = trial;
                    f = ft;
                }
                break;
            }
        }
    }
}

/// Pure Newton steps past the tolerance while the gradient keeps shrinking.
fn polish(problem: &Restricted, mut c: DVector<f64>, mut g: DVector<f64>, mut h: DMatrix<f64>) -> (DVector<f64>, f64, DMatrix<f64>) {
    let mut gnorm = g.norm();
    for _ in 0..POLISH_STEPS {
        let Some(ch) = h.clone().cholesky() else { break };
        let trial = &c - ch.solve(&g);
        let (gt, ht) = problem.grad_hess(&trial);
        let gt_norm = gt.norm();
        if !(gt_norm < gnorm) {
            break;
        }
        (c, g, h, gnorm) = (trial, gt, ht, gt_norm);
    }
    (c, gnorm, h)
}

/// Draws `count` Gaussian starts of scale `scale` and returns the optimum from each.
pub fn uniqueness_probe(
    data: &Dataset,
    nonsep: &[usize],
    w: &WeightVector,
    loss: LossKind,
    count: usize,
    scale: f64,
    seed: u64,
) -> Result<Vec<RestrictedOptimum>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s: Vec<f64> = (0..data.dim())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect();
            nonsep_optimum_from(data, nonsep, w, loss, Some(&s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conflict() -> Dataset {
        Dataset::new(vec![vec![1.0], vec![1.0]], vec![1.0, -1.0], None).unwrap()
    }

    #[test]
    fn conflict_pair_closed_form() {
        let w = WeightVector::new(vec![3.0, 0.5], 4.0).unwrap();
        let r = nonsep_optimum(&conflict(), &[0, 1], &w, LossKind::Exponential).unwrap();
        assert!((r.theta_tilde[0] - 0.5 * 6f64.ln()).abs() < 1e-10);
        assert!(r.optim_residual <= RESIDUAL_TOL);
        // Hessian (1/2)(w+ e^{-t} + w- e^{t}) = sqrt(w+ w-) at the optimum
        assert!((r.strong_convexity_omega - 1.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn equal_weights_and_scaling() {
        let w = WeightVector::uniform(2);
        let r = nonsep_optimum(&conflict(), &[0, 1], &w, LossKind::Exponential).unwrap();
        assert!(r.theta_tilde[0].abs() < 1e-12);
        let w1 = WeightVector::new(vec![2.0, 0.7], 3.0).unwrap();
        let a = nonsep_optimum(&conflict(), &[0, 1], &w1, LossKind::Exponential).unwrap();
        let b = nonsep_optimum(&conflict(), &[0, 1], &w1.scaled(2.5).unwrap(), LossKind::Exponential).unwrap();
        assert!((a.theta_tilde[0] - b.theta_tilde[0]).abs() < 1e-10);
    }

    #[test]
    fn empty_nonsep_is_domain_error() {
        let w = WeightVector::uniform(2);
        assert!(matches!(nonsep_optimum(&conflict(), &[], &w, LossKind::Exponential), Err(LabError::Domain(_))));
    }

    #[test]
    fn projection_examples() {
        let e1 = span_basis(&[&[2.0, 0.0]], 2).unwrap();
        assert_eq!(project_span(&[1.0, 1.0], &e1).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(project_span(&[0.0, 3.0], &e1).unwrap().as_slice(), &[0.0, 0.0]);
        let bad = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        assert!(matches!(project_span(&[1.0, 1.0], &bad), Err(LabError::Domain(_))));
    }

    #[test]
    fn span_drops_dependent_vectors() {
        let b = span_basis(&[&[1.0, 1.0, 0.0], &[2.0, 2.0, 0.0], &[0.0, 1.0, 0.0]], 3).unwrap();
        assert_eq!(b.ncols(), 2);
        let p = project_span(&[0.3, -0.7, 5.0], &b).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] + 0.7).abs() < 1e-15 && p[2].abs() < 1e-15);
    }

    #[test]
    fn logistic_conflict_pair() {
        // logistic: w+ sigma(-t) = w- sigma(t) gives t = ln(w+/w-)
        let w = WeightVector::new(vec![2.0, 1.0], 2.0).unwrap();
        let r = nonsep_optimum(&conflict(), &[0, 1], &w, LossKind::Logistic).unwrap();
        assert!((r.theta_tilde[0] - 2f64.ln()).abs() < 1e-10);
    }
}
