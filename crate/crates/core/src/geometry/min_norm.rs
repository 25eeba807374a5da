use crate::data::{norm, Dataset};
use crate::error::{LabError, Result};

pub const GAP_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100_000;
/// Hull norms at or below this are read as "origin in the hull".
pub const NONSEPARABLE_NORM: f64 = 1e-7;

const RESYNC_EVERY: usize = 64;

/// Linear max-margin direction with its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginCertificate {
    /// `None` when the data is declared non-separable.
    pub theta_star: Option<Vec<f64>>,
    pub gamma_star: f64,
    pub p_star: Vec<f64>,
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl MarginCertificate {
    pub fn separable(&self) -> bool {
        self.theta_star.is_some()
    }

    /// `min_i y_i theta*^T x_i`, or `None` when non-separable.
    pub fn primal_margin(&self, data: &Dataset) -> Option<f64> {
        let theta = self.theta_star.as_ref()?;
        Some(
            (0..data.len())
                .map(|i| data.label(i) * crate::data::dot(theta, data.row(i)))
                .fold(f64::INFINITY, f64::min),
        )
    }
}

struct Hull {
    z: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
}

impl Hull {
    fn new(data: &Dataset) -> Self {
        let z: Vec<Vec<f64>> = (0..data.len()).map(|i| data.signed_row(i)).collect();
        let gram = z
            .iter()
            .map(|a| z.iter().map(|b| crate::data::dot(a, b)).collect())
            .collect();
        Self { z, gram }
    }

    fn point(&self, p: &[f64]) -> Vec<f64> {
        let d = self.z.first().map_or(0, Vec::len);
        let mut v = vec![0.0; d];
        for (pi, zi) in p.iter().zip(&self.z) {
            if *pi != 0.0 {
                for (vk, zk) in v.iter_mut().zip(zi) {
                    *vk += pi * zk;
                }
            }
        }
        v
    }

    /// `(G p, p^T G p)` computed from the explicit hull point.
    fn resync(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let v = self.point(p);
        let gz: Vec<f64> = self.z.iter().map(|zi| crate::data::dot(zi, &v)).collect();
        let vv = crate::data::dot(&v, &v);
        (gz, vv)
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Max-margin linear separator through the minimum-norm point of `conv{y_i x_i}`,
/// found by Frank-Wolfe with away steps and exact line search.
pub fn max_margin_linear(data: &Dataset) -> Result<MarginCertificate> {
    let n = data.len();
    if n == 0 {
        return Err(LabError::structural("max-margin needs at least one sample"));
    }
    let hull = Hull::new(data);

    // start at the vertex closest to the origin
    let start = argmin(&(0..n).map(|i| hull.gram[i][i]).collect::<Vec<_>>());
    let mut p = vec![0.0; n];
    p[start] = 1.0;
    let (mut gz, mut vv) = hull.resync(&p);

    let mut iterations = 0;
    let mut converged = false;
    let mut nonseparable = false;
    while iterations < MAX_ITERATIONS {
        if iterations % RESYNC_EVERY == 0 {
            (gz, vv) = hull.resync(&p);
        }
        if vv <= NONSEPARABLE_NORM * NONSEPARABLE_NORM {
            (gz, vv) = hull.resync(&p);
            if vv <= NONSEPARABLE_NORM * NONSEPARABLE_NORM {
                nonseparable = true;
                break;
            }
        }
        let s = argmin(&gz);
        let fw_gap = vv - gz[s];
        if fw_gap <= GAP_TOL * vv.sqrt() {
            (gz, vv) = hull.resync(&p);
            let s = argmin(&gz);
            if vv - gz[s] <= GAP_TOL * vv.sqrt() {
                converged = true;
                break;
            }
        }

        // away vertex: active atom with the largest <v, z_i>
        let mut a = None;
        for i in 0..n {
            if p[i] > 0.0 && a.is_none_or(|j: usize| gz[i] > gz[j]) {
                a = Some(i);
            }
        }
        let a = a.expect("p is on the simplex");
        let away_gap = gz[a] - vv;

        iterations += 1;
        if fw_gap >= away_gap {
            let curvature = hull.gram[s][s] - 2.0 * gz[s] + vv;
            if curvature <= 0.0 {
                break;
            }
            let tau = (fw_gap / curvature).clamp(0.0, 1.0);
            for (i, pi) in p.iter_mut().enumerate() {
                *pi *= 1.0 - tau;
                if i == s {
                    *pi += tau;
                }
            }
            for (i, g) in gz.iter_mut().enumerate() {
                *g += tau * (hull.gram[i][s] - *g);
            }
        } else {
            let curvature = vv - 2.0 * gz[a] + hull.gram[a][a];
            if curvature <= 0.0 {
                break;
            }
            let max_tau = if p[a] >= 1.0 { f64::INFINITY } else { p[a] / (1.0 - p[a]) };
            let tau = (away_gap / curvature).clamp(0.0, max_tau);
            let drop = tau >= max_tau;
            for (i, pi) in p.iter_mut().enumerate() {
                *pi *= 1.0 + tau;
                if i == a {
                    *pi -= tau;
                }
            }
            if drop {
                p[a] = 0.0;
            }
            for (i, g) in gz.iter_mut().enumerate() {
                *g += tau * (*g - hull.gram[i][a]);
            }
        }
        vv = p.iter().zip(&gz).map(|(pi, gi)| pi * gi).sum::<f64>().max(0.0);
    }

    let total: f64 = p.iter().sum();
    for pi in p.iter_mut() {
        *pi = (*pi / total).max(0.0);
    }
    let v = hull.point(&p);
    let v_norm = norm(&v);
    if nonseparable || v_norm <= NONSEPARABLE_NORM {
        return Ok(MarginCertificate {
            theta_star: None,
            gamma_star: v_norm,
            p_star: p,
            duality_gap: 0.0,
            iterations,
            converged: true,
        });
    }
    let theta: Vec<f64> = v.iter().map(|x| x / v_norm).collect();
    let primal = hull
        .z
        .iter()
        .map(|zi| crate::data::dot(zi, &theta))
        .fold(f64::INFINITY, f64::min);
    let duality_gap = (v_norm - primal).max(0.0);
    Ok(MarginCertificate {
        theta_star: Some(theta),
        gamma_star: v_norm,
        p_star: p,
        duality_gap,
        iterations,
        converged: converged || duality_gap <= GAP_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Dataset {
        Dataset::new(rows, labels, None).unwrap()
    }

    #[test]
    fn symmetric_pair() {
        let c = max_margin_linear(&ds(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0])).unwrap();
        let t = c.theta_star.unwrap();
        assert!((t[0] - 1.0).abs() < 1e-12 && t[1].abs() < 1e-12);
        assert!((c.gamma_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_points_in_the_plane() {
        let data = ds(vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 0.0]], vec![1.0, 1.0, -1.0]);
        let c = max_margin_linear(&data).unwrap();
        let t = c.theta_star.clone().unwrap();
        assert!((t[0] - 1.0).abs() < 1e-3 && t[1].abs() < 1e-3);
        assert!((c.gamma_star - 1.0).abs() < 1e-3);
        assert!(c.duality_gap <= GAP_TOL);
        assert!(c.primal_margin(&data).unwrap() >= c.gamma_star - c.duality_gap);
    }

    #[test]
    fn conflict_is_nonseparable() {
        let c = max_margin_linear(&ds(vec![vec![1.0], vec![1.0]], vec![1.0, -1.0])).unwrap();
        assert!(!c.separable());
        assert!(c.gamma_star <= NONSEPARABLE_NORM);
    }

    #[test]
    fn dual_weights_sit_on_support_vectors() {
        // support vectors (1,1) and (1,-1); the far point gets no weight
        let data = ds(vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![5.0, 0.0]], vec![1.0, 1.0, 1.0]);
        let c = max_margin_linear(&data).unwrap();
        assert!(c.p_star[2] < 1e-9);
        assert!((c.p_star[0] - 0.5).abs() < 1e-6);
        assert!((c.gamma_star - 1.0).abs() < 1e-9);
    }
}
