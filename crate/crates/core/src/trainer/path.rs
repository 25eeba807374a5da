use nalgebra::DVector;

use super::{train_from, Attachments, Termination, TrainConfig};
use crate::data::{Dataset, WeightVector};
use crate::error::{LabError, Result};
use crate::predictors::Predictor;

/// Stationarity target for every point on the path.
pub const PATH_STOP_GRAD_NORM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub theta: DVector<f64>,
    pub gamma_tilde: Option<f64>,
    pub log_risk: f64,
    pub termination: Termination,
    pub steps: usize,
}

/// Minimizes `L_lambda` for each `lambda` in a strictly decreasing schedule,
/// warm-starting each solve from the previous solution.
pub fn weak_reg_path(
    predictor: &dyn Predictor,
    data: &Dataset,
    w: &WeightVector,
    lambdas: &[f64],
    config: &TrainConfig,
) -> Result<Vec<PathPoint>> {
    if lambdas.is_empty() {
        return Err(LabError::config("lambda schedule is empty"));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(LabError::config("lambda schedule must be positive"));
    }
    if lambdas.windows(2).any(|p| p[1] >= p[0]) {
        return Err(LabError::config("lambda schedule must be strictly decreasing"));
    }
    let mut theta = predictor.init(config.seed, config.init_scale);
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = TrainConfig { lambda, stop_grad_norm: PATH_STOP_GRAD_NORM, ..config.clone() };
        let tr = train_from(predictor, data, w, &cfg, &Attachments::default(), theta)
            .map_err(|e| LabError::PathDivergence { lambda, source: Box::new(e) })?;
        let last = tr.last().clone();
        theta = tr.final_theta;
        out.push(PathPoint {
            lambda,
            theta: theta.clone(),
            gamma_tilde: last.gamma_tilde,
            log_risk: last.log_risk,
            termination: tr.termination,
            steps: last.t,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::LinearPredictor;
    use crate::trainer::{train, Schedule};

    fn pair() -> Dataset {
        Dataset::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0], None).unwrap()
    }

    #[test]
    fn symmetric_pair_stays_on_axis() {
        let cfg = TrainConfig { eta0: 1.0, max_steps: 200_000, ..Default::default() };
        let pts = weak_reg_path(&LinearPredictor::new(2), &pair(), &WeightVector::uniform(2), &[1e-1, 1e-2, 1e-3], &cfg)
            .unwrap();
        for p in &pts {
            assert_eq!(p.theta[1], 0.0);
            assert!(p.theta[0] > 0.0);
            assert!((p.gamma_tilde.unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(p.termination, Termination::Stationarity);
        }
        assert!(pts[2].theta[0] > pts[1].theta[0] && pts[1].theta[0] > pts[0].theta[0]);
    }

    #[test]
    fn single_lambda_matches_train() {
        let cfg = TrainConfig { eta0: 0.5, schedule: Schedule::Constant, max_steps: 50_000, ..Default::default() };
        let p = LinearPredictor::new(2);
        let w = WeightVector::uniform(2);
        let pts = weak_reg_path(&p, &pair(), &w, &[1e-2], &cfg).unwrap();
        let direct = train(
            &p,
            &pair(),
            &w,
            &TrainConfig { lambda: 1e-2, stop_grad_norm: PATH_STOP_GRAD_NORM, ..cfg },
            &Attachments::default(),
        )
        .unwrap();
        assert_eq!(pts[0].theta, direct.final_theta);
    }

    #[test]
    fn rejects_bad_schedules() {
        let p = LinearPredictor::new(2);
        let w = WeightVector::uniform(2);
        let cfg = TrainConfig::default();
        assert!(weak_reg_path(&p, &pair(), &w, &[1e-3, 1e-2], &cfg).is_err());
        assert!(weak_reg_path(&p, &pair(), &w, &[0.0], &cfg).is_err());
        assert!(weak_reg_path(&p, &pair(), &w, &[], &cfg).is_err());
    }
}
