use rayon::prelude::*;

use super::min_norm::max_margin_linear;
use super::simplex::{LinearProgram, Relation};
use crate::data::Dataset;
use crate::error::{LabError, Result};

/// An LP optimum above this marks a sample as separable.
pub const SEPARABLE_LP_TOL: f64 = 1e-8;
/// Optima in `[NEAR_THRESHOLD_LOW, NEAR_THRESHOLD_HIGH]` are flagged as borderline.
pub const NEAR_THRESHOLD_LOW: f64 = 1e-10;
pub const NEAR_THRESHOLD_HIGH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilitySplit {
    pub sep_indices: Vec<usize>,
    pub nonsep_indices: Vec<usize>,
    pub witness_theta: Vec<f64>,
    /// Max margin of the separable part; `None` when it is empty.
    pub gamma_sep: Option<f64>,
    /// Per-sample LP optimum `max y_i theta^T x_i`.
    pub lp_optima: Vec<f64>,
    /// Samples whose LP optimum is too close to the threshold to trust.
    pub near_threshold: Vec<usize>,
}

impl SeparabilitySplit {
    pub fn is_separable(&self) -> bool {
        self.nonsep_indices.is_empty()
    }
}

/// Solves `max z_i^T theta` s.t. `z_j^T theta >= 0` for all j and `||theta||_inf <= 1`.
///
/// Uses `theta = u - v` with `u, v` in `[0, 1]^d`, so the origin is a feasible vertex.
pub fn sample_lp(data: &Dataset, i: usize) -> Result<(f64, Vec<f64>)> {
    let d = data.dim();
    let z: Vec<Vec<f64>> = (0..data.len()).map(|j| data.signed_row(j)).collect();
    let mut objective = z[i].clone();
    objective.extend(z[i].iter().map(|v| -v));
    let mut lp = LinearProgram::new(objective);
    for zj in &z {
        let mut row: Vec<f64> = zj.iter().map(|v| -v).collect();
        row.extend(zj.iter().copied());
        lp.add(row, Relation::Le, 0.0);
    }
    for k in 0..2 * d {
        let mut row = vec![0.0; 2 * d];
        row[k] = 1.0;
        lp.add(row, Relation::Le, 1.0);
    }
    let sol = lp.solve().map_err(|e| LabError::Solver { index: Some(i), message: e.to_string() })?;
    let theta: Vec<f64> = (0..d).map(|k| sol.x[k] - sol.x[d + k]).collect();
    Ok((sol.objective, theta))
}

/// Greedy split into samples that some margin-nonnegative direction separates
/// strictly and the rest.
pub fn maximal_separable_subset(data: &Dataset) -> Result<SeparabilitySplit> {
    let n = data.len();
    if n == 0 {
        return Err(LabError::structural("separability split needs at least one sample"));
    }
    let solved: Vec<(f64, Vec<f64>)> = (0..n).into_par_iter().map(|i| sample_lp(data, i)).collect::<Result<_>>()?;

    let mut sep = Vec::new();
    let mut nonsep = Vec::new();
    let mut near = Vec::new();
    let mut witness = vec![0.0; data.dim()];
    let mut optima = Vec::with_capacity(n);
    for (i, (opt, theta)) in solved.into_iter().enumerate() {
        if (NEAR_THRESHOLD_LOW..=NEAR_THRESHOLD_HIGH).contains(&opt) {
            near.push(i);
        }
        if opt > SEPARABLE_LP_TOL {
            sep.push(i);
            for (w, t) in witness.iter_mut().zip(&theta) {
                *w += t;
            }
        } else {
            nonsep.push(i);
        }
        optima.push(opt);
    }
    let gamma_sep = if sep.is_empty() {
        None
    } else {
        Some(max_margin_linear(&data.subset(&sep)?)?.gamma_star)
    };
    Ok(SeparabilitySplit {
        sep_indices: sep,
        nonsep_indices: nonsep,
        witness_theta: witness,
        gamma_sep,
        lp_optima: optima,
        near_threshold: near,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Dataset {
        Dataset::new(rows, labels, None).unwrap()
    }

    #[test]
    fn separable_line() {
        let s = maximal_separable_subset(&ds(vec![vec![1.0], vec![-1.0]], vec![1.0, -1.0])).unwrap();
        assert_eq!(s.sep_indices, vec![0, 1]);
        assert!(s.nonsep_indices.is_empty());
        assert!((s.gamma_sep.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_point_opposite_labels() {
        let s = maximal_separable_subset(&ds(vec![vec![1.0], vec![1.0]], vec![1.0, -1.0])).unwrap();
        assert!(s.sep_indices.is_empty());
        assert_eq!(s.nonsep_indices, vec![0, 1]);
        assert_eq!(s.gamma_sep, None);
    }

    #[test]
    fn mixed_plane() {
        let data = ds(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![1.0, -1.0, 1.0, -1.0],
        );
        let s = maximal_separable_subset(&data).unwrap();
        assert_eq!(s.sep_indices, vec![0, 1]);
        assert_eq!(s.nonsep_indices, vec![2, 3]);
        for i in 0..4 {
            let m = data.label(i) * crate::data::dot(&s.witness_theta, data.row(i));
            if i < 2 {
                assert!(m > 0.0);
            } else {
                assert!(m >= -1e-12);
            }
        }
        assert!(s.near_threshold.is_empty());
    }
}
