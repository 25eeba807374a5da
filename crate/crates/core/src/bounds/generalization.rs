use std::io::Write;

use super::divergence::DensityPair;
use crate::data::Dataset;
use crate::error::{LabError, Result};
use crate::predictors::{normalized_margins, Predictor};

/// Target-risk bound at one margin level: `total = term_I + term_II + epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenBoundReport {
    /// `(1/n) sum_i eta_i 1{normalized margin_i < gamma}`.
    pub term_i: f64,
    /// `C sqrt(chi2 + 1) / (gamma H^((H-1)/2) sqrt(n))`.
    pub term_ii: f64,
    pub epsilon: f64,
    pub total: f64,
    pub gamma_used: f64,
    pub c_sup_norm: f64,
    pub h: usize,
    pub n: usize,
    pub delta: f64,
    pub chi2: f64,
    /// Complexity term from the weighted Rademacher bound, `4 R / gamma`, with
    /// per-layer norms `1/sqrt(H)`; reported alongside `term_ii`.
    pub term_ii_layerwise: f64,
}

/// Largest feature norm over several samples.
pub fn pooled_sup_norm(sets: &[&Dataset]) -> f64 {
    sets.iter().map(|d| d.max_feature_norm()).fold(0.0, f64::max)
}

fn ratios(data: &Dataset) -> Result<&[f64]> {
    data.density_ratios().ok_or_else(|| LabError::domain("dataset carries no density ratios"))
}

/// `C (sqrt(2 log(2) H) + 1) prod_frobenius sqrt(mean eta^2) / sqrt(n)`.
pub fn weighted_rademacher_bound(data: &Dataset, h: usize, prod_frobenius: f64, c: f64) -> Result<f64> {
    let eta = ratios(data)?;
    if h == 0 {
        return Err(LabError::domain("depth must be positive"));
    }
    if !(prod_frobenius >= 0.0) {
        return Err(LabError::domain("Frobenius product must be nonnegative"));
    }
    let n = eta.len() as f64;
    let second_moment = eta.iter().map(|e| e * e).sum::<f64>() / n;
    Ok(c * ((2.0 * 2f64.ln() * h as f64).sqrt() + 1.0) * prod_frobenius * second_moment.sqrt() / n.sqrt())
}

struct BoundInputs<'a> {
    margins: &'a [f64],
    eta: &'a [f64],
    h: usize,
    c: f64,
    chi2: f64,
    delta: f64,
    rademacher_unit: f64,
}

impl BoundInputs<'_> {
    fn at(&self, gamma: f64) -> Result<GenBoundReport> {
        if !(gamma > 0.0 && gamma < 4.0 * self.c) {
            return Err(LabError::domain(format!("gamma = {gamma} outside (0, 4C) with C = {}", self.c)));
        }
        let n = self.margins.len();
        let nf = n as f64;
        let term_i = self
            .margins
            .iter()
            .zip(self.eta)
            .filter(|(m, _)| **m < gamma)
            .map(|(_, e)| e)
            .sum::<f64>()
            / nf;
        let hf = self.h as f64;
        let term_ii = self.c * (self.chi2 + 1.0).sqrt() / (gamma * hf.powf((hf - 1.0) / 2.0) * nf.sqrt());
        // log log2(4C/gamma) is negative for gamma in (2C, 4C); it is clamped at 0
        let loglog = (4.0 * self.c / gamma).log2().ln().max(0.0);
        let epsilon = (loglog / nf).sqrt() + ((1.0 / self.delta).ln() / nf).sqrt();
        Ok(GenBoundReport {
            term_i,
            term_ii,
            epsilon,
            total: term_i + term_ii + epsilon,
            gamma_used: gamma,
            c_sup_norm: self.c,
            h: self.h,
            n,
            delta: self.delta,
            chi2: self.chi2,
            term_ii_layerwise: 4.0 * self.rademacher_unit / gamma,
        })
    }
}

fn prepare<'a>(
    data: &'a Dataset,
    predictor: &dyn Predictor,
    margins: &'a [f64],
    pair: &DensityPair,
    c_sup: f64,
    delta: f64,
) -> Result<BoundInputs<'a>> {
    let eta = ratios(data)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LabError::domain(format!("delta = {delta} outside (0, 1)")));
    }
    if !(c_sup > 0.0 && c_sup.is_finite()) {
        return Err(LabError::domain("C must be positive and finite"));
    }
    let h = predictor.depth();
    let hf = h as f64;
    let rademacher_unit = weighted_rademacher_bound(data, h, hf.powf(-hf / 2.0), c_sup)?;
    Ok(BoundInputs { margins, eta, h, c: c_sup, chi2: pair.chi2, delta, rademacher_unit })
}

/// Evaluates the three terms of the target-risk bound at margin level `gamma`.
/// `c_sup` is the largest feature norm over the pooled train and test samples.
pub fn generalization_bound(
    data: &Dataset,
    predictor: &dyn Predictor,
    theta: &[f64],
    gamma: f64,
    delta: f64,
    pair: &DensityPair,
    c_sup: f64,
) -> Result<GenBoundReport> {
    let margins = normalized_margins(predictor, theta, data)?;
    prepare(data, predictor, &margins, pair, c_sup, delta)?.at(gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSweep {
    pub gamma_opt: f64,
    pub total_at_opt: f64,
    /// Sorted by `gamma_used`.
    pub curve: Vec<GenBoundReport>,
    pub smallest_positive_margin: Option<f64>,
}

pub const SWEEP_GRID_POINTS: usize = 100;

/// Minimizes the total bound over the positive sample margins and a log grid.
pub fn optimal_gamma_sweep(
    data: &Dataset,
    predictor: &dyn Predictor,
    theta: &[f64],
    delta: f64,
    pair: &DensityPair,
    c_sup: f64,
) -> Result<GammaSweep> {
    let margins = normalized_margins(predictor, theta, data)?;
    let inputs = prepare(data, predictor, &margins, pair, c_sup, delta)?;
    let upper = 4.0 * c_sup * (1.0 - 1e-6);
    let smallest = margins.iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
    let smallest_positive_margin = smallest.is_finite().then_some(smallest);
    let lower = smallest_positive_margin.map_or(upper * 1e-4, |m| (m / 10.0).min(upper));

    let mut gammas: Vec<f64> = margins.iter().copied().filter(|&m| m > 0.0 && m < 4.0 * c_sup).collect();
    let (ll, lu) = (lower.ln(), upper.ln());
    gammas.extend(
        (0..SWEEP_GRID_POINTS).map(|k| (ll + (lu - ll) * k as f64 / (SWEEP_GRID_POINTS - 1) as f64).exp()),
    );
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();

    let curve: Vec<GenBoundReport> = gammas.iter().map(|&g| inputs.at(g)).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in curve.iter().enumerate() {
        if r.total < curve[best].total {
            best = i;
        }
    }
    Ok(GammaSweep {
        gamma_opt: curve[best].gamma_used,
        total_at_opt: curve[best].total,
        curve,
        smallest_positive_margin,
    })
}

pub const SWEEP_HEADER: [&str; 5] = ["gamma", "term_I", "term_II", "epsilon", "total"];

pub fn write_sweep_csv<W: Write>(out: W, curve: &[GenBoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in curve {
        w.write_record([r.gamma_used, r.term_i, r.term_ii, r.epsilon, r.total].map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bound_report<W: Write>(out: &mut W, r: &GenBoundReport) -> Result<()> {
    writeln!(out, "[generalization]")?;
    writeln!(out, "gamma = {:.16e}", r.gamma_used)?;
    writeln!(out, "term_I = {:.16e}", r.term_i)?;
    writeln!(out, "term_II = {:.16e}", r.term_ii)?;
    writeln!(out, "term_II_layerwise = {:.16e}", r.term_ii_layerwise)?;
    writeln!(out, "epsilon = {:.16e}", r.epsilon)?;
    writeln!(out, "total = {:.16e}", r.total)?;
    writeln!(out, "C = {:.16e}", r.c_sup_norm)?;
    writeln!(out, "H = {}", r.h)?;
    writeln!(out, "n = {}", r.n)?;
    writeln!(out, "delta = {}", r.delta)?;
    writeln!(out, "chi2 = {:.16e}", r.chi2)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{Chi2Method, DistSpec, Gaussian};
    use crate::predictors::{HomogeneousMlp, LinearPredictor};

    fn pair() -> DensityPair {
        let g = DistSpec::Gaussian(Gaussian::isotropic(vec![0.0], 1.0).unwrap());
        DensityPair::new(g.clone(), g, Chi2Method::ClosedForm).unwrap()
    }

    fn unit_ratios(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.1 + i as f64 / n as f64]).collect();
        Dataset::new(rows, vec![1.0; n], Some(vec![1.0; n])).unwrap()
    }

    #[test]
    fn rademacher_arithmetic() {
        let d = unit_ratios(100);
        let r = weighted_rademacher_bound(&d, 1, 1.0, 1.0).unwrap();
        assert!((r - 0.217_741_002_251_547).abs() < 1e-14);
        let d2 = Dataset::new(
            (0..100).map(|i| vec![i as f64]).collect(),
            vec![1.0; 100],
            Some(vec![2.0; 100]),
        )
        .unwrap();
        assert!((weighted_rademacher_bound(&d2, 1, 1.0, 1.0).unwrap() - 2.0 * r).abs() < 1e-14);
        let plain = Dataset::new(vec![vec![1.0]], vec![1.0], None).unwrap();
        assert!(weighted_rademacher_bound(&plain, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn indicator_extremes() {
        let d = unit_ratios(10);
        let p = LinearPredictor::new(1);
        let lo = generalization_bound(&d, &p, &[1.0], 0.05, 0.05, &pair(), 1.1).unwrap();
        assert_eq!(lo.term_i, 0.0);
        let hi = generalization_bound(&d, &p, &[1.0], 4.0, 0.05, &pair(), 1.1).unwrap();
        assert_eq!(hi.term_i, 1.0);
        assert!((lo.total - lo.term_i - lo.term_ii - lo.epsilon).abs() < 1e-15);
        assert!(generalization_bound(&d, &p, &[1.0], 4.4, 0.05, &pair(), 1.1).is_err());
    }

    #[test]
    fn term_ii_two_layers() {
        let n = 100;
        let d = Dataset::new((0..n).map(|_| vec![1.0]).collect(), vec![1.0; n], Some(vec![1.0; n])).unwrap();
        let mlp = HomogeneousMlp::relu(vec![1, 1, 1]).unwrap();
        let r = generalization_bound(&d, &mlp, &[1.0, 1.0], 1.0, 0.05, &pair(), 1.0).unwrap();
        assert!((r.term_ii - 0.070_710_678_118_654_75).abs() < 1e-15);
    }

    #[test]
    fn sweep_prefers_margin_region() {
        let d = unit_ratios(50);
        let p = LinearPredictor::new(1);
        let s = optimal_gamma_sweep(&d, &p, &[1.0], 0.05, &pair(), 1.1).unwrap();
        assert!(s.gamma_opt >= s.smallest_positive_margin.unwrap());
        assert!(s.curve.windows(2).all(|w| w[0].gamma_used < w[1].gamma_used));
        let min = s.curve.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
        assert_eq!(min, s.total_at_opt);
    }
}
