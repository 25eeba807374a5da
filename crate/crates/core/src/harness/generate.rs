use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Generator, WeightScheme};
use crate::bounds::{Chi2Method, DensityPair, DistSpec, Gaussian};
use crate::data::{dot, norm, Dataset, WeightVector};
use crate::error::{LabError, Result};

const DATA_STREAM: u64 = 0;
const WEIGHT_STREAM: u64 = 1;
const TARGET_STREAM: u64 = 2;

/// Known answers that come with a generated dataset.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    pub planted_theta: Option<Vec<f64>>,
    pub planted_gamma: Option<f64>,
    /// `0.5 log(w_plus / w_minus)` for the conflict pair.
    pub conflict_theta: Option<f64>,
    pub pair: Option<DensityPair>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub oracle: Oracle,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
        .collect()
}

fn unit_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, d);
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Removes the component along the unit vector `theta`.
fn orthogonalize(v: &mut [f64], theta: &[f64]) {
    let c = dot(v, theta);
    for (a, b) in v.iter_mut().zip(theta) {
        *a -= c * b;
    }
}

fn planted_margin(gamma: f64, n: usize, d: usize, radius: f64, seed: u64) -> Result<Generated> {
    if gamma >= radius {
        return Err(LabError::config(format!("planted margin {gamma} must be below radius {radius}")));
    }
    if n < 2 || d < 2 {
        return Err(LabError::config("planted_margin needs n >= 2 and d >= 2"));
    }
    let mut rng = rng(seed, DATA_STREAM);
    let theta = unit_vec(&mut rng, d);
    let mut u = loop {
        let mut v = normal_vec(&mut rng, d);
        orthogonalize(&mut v, &theta);
        if norm(&v) > 1e-8 {
            break v;
        }
    };
    let un = norm(&u);
    u.iter_mut().for_each(|x| *x /= un);

    // z = m theta + v with v orthogonal to theta and ||z|| < radius
    let place = |m: f64, v: &[f64]| -> Vec<f64> {
        let room = (radius * radius - m * m).max(0.0).sqrt() * 0.999;
        let vn = norm(v);
        let s = if vn > room { room / vn } else { 1.0 };
        theta.iter().zip(v).map(|(t, x)| m * t + s * x).collect()
    };
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for sign in [1.0, -1.0] {
        let s: f64 = rng.random_range(0.5..1.5);
        let v: Vec<f64> = u.iter().map(|x| sign * s * x).collect();
        rows.push(place(gamma, &v));
        labels.push(sign);
    }
    let spread = (radius - gamma).min(1.0);
    for _ in 2..n {
        let m = gamma + spread * rng.random_range(0.05..1.0);
        let mut v = normal_vec(&mut rng, d);
        orthogonalize(&mut v, &theta);
        rows.push(place(m, &v));
        labels.push(if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    }
    // stored features are x = y z
    for (row, y) in rows.iter_mut().zip(&labels) {
        row.iter_mut().for_each(|x| *x *= y);
    }
    Ok(Generated {
        data: Dataset::new(rows, labels, None)?,
        oracle: Oracle { planted_theta: Some(theta), planted_gamma: Some(gamma), ..Default::default() },
    })
}

fn truncated_sample<R: Rng>(g: &Gaussian, limit: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let x = g.sample(rng);
        let dist = x.iter().zip(g.mean()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist <= limit {
            return x;
        }
    }
}

fn label_of(x: &[f64]) -> f64 {
    if x[0] >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn shift_pair(mu_s: &[f64], mu_t: &[f64], sigma: f64) -> Result<DensityPair> {
    DensityPair::new(
        DistSpec::Gaussian(Gaussian::isotropic(mu_s.to_vec(), sigma)?),
        DistSpec::Gaussian(Gaussian::isotropic(mu_t.to_vec(), sigma)?),
        Chi2Method::ClosedForm,
    )
}

pub fn generate_data(generator: &Generator, seed: u64) -> Result<Generated> {
    match generator {
        Generator::SymmetricPair => Ok(Generated {
            data: Dataset::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0], None)?,
            oracle: Oracle { planted_theta: Some(vec![1.0, 0.0]), planted_gamma: Some(1.0), ..Default::default() },
        }),
        Generator::PlantedMargin { gamma, n, d, radius } => planted_margin(*gamma, *n, *d, *radius, seed),
        Generator::ConflictPair { w_plus, w_minus } => Ok(Generated {
            data: Dataset::new(vec![vec![1.0], vec![1.0]], vec![1.0, -1.0], None)?,
            oracle: Oracle { conflict_theta: Some(0.5 * (w_plus / w_minus).ln()), ..Default::default() },
        }),
        Generator::MixedSepNonsep { n_sep } => {
            let mut rng = rng(seed, DATA_STREAM);
            let mut rows = Vec::with_capacity(n_sep + 2);
            let mut labels = Vec::with_capacity(n_sep + 2);
            for _ in 0..*n_sep {
                let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let z0: f64 = rng.random_range(0.5..1.5);
                let z1: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![y * z0, y * z1]);
                labels.push(y);
            }
            rows.push(vec![0.0, 1.0]);
            labels.push(1.0);
            rows.push(vec![0.0, 1.0]);
            labels.push(-1.0);
            Ok(Generated { data: Dataset::new(rows, labels, None)?, oracle: Oracle::default() })
        }
        Generator::GaussianShift { mu_s, mu_t, sigma, n, truncation } => {
            let pair = shift_pair(mu_s, mu_t, *sigma)?;
            let DistSpec::Gaussian(src) = &pair.source else { unreachable!("built as Gaussian") };
            let mut rng = rng(seed, DATA_STREAM);
            let rows: Vec<Vec<f64>> = (0..*n).map(|_| truncated_sample(src, truncation * sigma, &mut rng)).collect();
            let labels = rows.iter().map(|x| label_of(x)).collect();
            let eta = rows.iter().map(|x| pair.ratio(x)).collect();
            Ok(Generated {
                data: Dataset::new(rows, labels, Some(eta))?,
                oracle: Oracle { pair: Some(pair), ..Default::default() },
            })
        }
        Generator::TwoClusters { n, center, spread } => {
            let mut rng = rng(seed, DATA_STREAM);
            let mut rows = Vec::with_capacity(*n);
            let mut labels = Vec::with_capacity(*n);
            for i in 0..*n {
                let y = if i % 2 == 0 { 1.0 } else { -1.0 };
                let noise = normal_vec(&mut rng, center.len());
                rows.push(center.iter().zip(&noise).map(|(c, e)| y * c + spread * e).collect());
                labels.push(y);
            }
            Ok(Generated { data: Dataset::new(rows, labels, None)?, oracle: Oracle::default() })
        }
    }
}

/// Fresh labeled samples from the target distribution, with ratios.
pub fn sample_target(generator: &Generator, count: usize, seed: u64) -> Result<Dataset> {
    let Generator::GaussianShift { mu_s, mu_t, sigma, truncation, .. } = generator else {
        return Err(LabError::domain("only gaussian_shift has a target distribution"));
    };
    let pair = shift_pair(mu_s, mu_t, *sigma)?;
    let DistSpec::Gaussian(tgt) = &pair.target else { unreachable!("built as Gaussian") };
    let mut rng = rng(seed, TARGET_STREAM);
    let rows: Vec<Vec<f64>> = (0..count).map(|_| truncated_sample(tgt, truncation * sigma, &mut rng)).collect();
    let labels = rows.iter().map(|x| label_of(x)).collect();
    let eta = rows.iter().map(|x| pair.ratio(x)).collect();
    Dataset::new(rows, labels, Some(eta))
}

pub fn build_weights(scheme: &WeightScheme, generator: &Generator, data: &Dataset, seed: u64) -> Result<WeightVector> {
    let n = data.len();
    let ratio_weights = |m: f64, invert: bool| -> Result<WeightVector> {
        let eta = data.density_ratios().ok_or_else(|| LabError::config("weight scheme needs density ratios"))?;
        let w = eta.iter().map(|&e| (if invert { 1.0 / e } else { e }).clamp(1.0 / m, m)).collect();
        WeightVector::new(w, m)
    };
    match scheme {
        WeightScheme::Uniform => Ok(WeightVector::uniform(n)),
        WeightScheme::AlignedWithRatios { m } => ratio_weights(*m, false),
        WeightScheme::InvertedRatios { m } => ratio_weights(*m, true),
        WeightScheme::RandomBox { m } => {
            let mut rng = rng(seed, WEIGHT_STREAM);
            let lm = m.ln();
            let w = (0..n).map(|_| if lm > 0.0 { rng.random_range(-lm..lm).exp() } else { 1.0 }).collect();
            WeightVector::new(w, *m)
        }
        WeightScheme::Explicit { values, m } => {
            if values.len() != n {
                return Err(LabError::config(format!("{} explicit weights for {n} samples", values.len())));
            }
            match m {
                Some(m) => WeightVector::new(values.clone(), *m),
                None => WeightVector::with_tight_bound(values.clone()),
            }
        }
        WeightScheme::FromGenerator => match generator {
            Generator::ConflictPair { w_plus, w_minus } => WeightVector::with_tight_bound(vec![*w_plus, *w_minus]),
            _ => Err(LabError::config("generator weights are only defined for conflict_pair")),
        },
    }
}

/// Writes `data.csv`, `weights.csv` and `oracle.txt` into `dir`.
pub fn write_generated(dir: &Path, generated: &Generated, weights: &WeightVector) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    generated.data.save(dir.join("data.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("weights.csv"))?;
    w.write_record(["w"])?;
    for v in weights.as_slice() {
        w.write_record([format!("{v:.17e}")])?;
    }
    w.flush()?;
    let o = &generated.oracle;
    let mut out = BufWriter::new(std::fs::File::create(dir.join("oracle.txt"))?);
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",");
    writeln!(out, "[oracle]")?;
    writeln!(out, "weight_bound = {:e}", weights.bound())?;
    writeln!(out, "planted_theta = {}", o.planted_theta.as_deref().map_or(String::new(), join))?;
    writeln!(out, "planted_gamma = {}", o.planted_gamma.map_or(String::new(), |g| format!("{g:.17e}")))?;
    writeln!(out, "conflict_theta = {}", o.conflict_theta.map_or(String::new(), |g| format!("{g:.17e}")))?;
    match &o.pair {
        Some(p) => {
            writeln!(out, "chi2 = {:.17e}", p.chi2)?;
            writeln!(out, "chi2_std_error = {}", p.chi2_std_error.map_or(String::new(), |e| format!("{e:e}")))?;
        }
        None => writeln!(out, "chi2 =")?,
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::max_margin_linear;

    #[test]
    fn planted_margin_is_exact() {
        let g = generate_data(&Generator::PlantedMargin { gamma: 0.5, n: 20, d: 3, radius: 5.0 }, 11).unwrap();
        let theta = g.oracle.planted_theta.unwrap();
        let margins: Vec<f64> = (0..20).map(|i| g.data.label(i) * dot(&theta, g.data.row(i))).collect();
        let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 0.5).abs() < 1e-12);
        assert!(margins.iter().filter(|m| (**m - 0.5).abs() < 1e-9).count() == 2);
        assert!(g.data.max_feature_norm() < 5.0);
        let cert = max_margin_linear(&g.data).unwrap();
        assert!((cert.gamma_star - 0.5).abs() < 1e-7);
    }

    #[test]
    fn generation_is_deterministic() {
        let gen = Generator::GaussianShift { mu_s: vec![0.0, 0.0], mu_t: vec![0.5, 0.0], sigma: 1.0, n: 30, truncation: 10.0 };
        let a = generate_data(&gen, 5).unwrap();
        let b = generate_data(&gen, 5).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, generate_data(&gen, 6).unwrap().data);
    }

    #[test]
    fn equal_means_give_unit_ratios() {
        let gen = Generator::GaussianShift { mu_s: vec![0.3, 0.0], mu_t: vec![0.3, 0.0], sigma: 1.0, n: 20, truncation: 10.0 };
        let g = generate_data(&gen, 1).unwrap();
        assert!(g.data.density_ratios().unwrap().iter().all(|&e| (e - 1.0).abs() < 1e-12));
        assert_eq!(g.oracle.pair.unwrap().chi2, 0.0);
    }

    #[test]
    fn weight_schemes_respect_the_box() {
        let gen = Generator::GaussianShift { mu_s: vec![0.0, 0.0], mu_t: vec![2.0, 0.0], sigma: 1.0, n: 50, truncation: 10.0 };
        let g = generate_data(&gen, 2).unwrap();
        for scheme in [
            WeightScheme::AlignedWithRatios { m: 3.0 },
            WeightScheme::InvertedRatios { m: 3.0 },
            WeightScheme::RandomBox { m: 3.0 },
        ] {
            let w = build_weights(&scheme, &gen, &g.data, 0).unwrap();
            assert!(w.as_slice().iter().all(|&v| (1.0 / 3.0 - 1e-12..=3.0 + 1e-12).contains(&v)));
        }
        let conflict = Generator::ConflictPair { w_plus: 4.0, w_minus: 1.0 };
        let cd = generate_data(&conflict, 0).unwrap();
        let w = build_weights(&WeightScheme::FromGenerator, &conflict, &cd.data, 0).unwrap();
        assert_eq!(w.as_slice(), &[4.0, 1.0]);
        assert!((cd.oracle.conflict_theta.unwrap() - 2f64.ln()).abs() < 1e-15);
    }
}
