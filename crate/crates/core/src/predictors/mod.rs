//! Positively homogeneous predictors `f(theta, x)`.
//!
//! Parameters are always a flat vector. For the MLP it is the row-major
//! concatenation of `W_1, ..., W_H`; a linear model is the one-layer case.

mod linear;
mod mlp;
mod params_io;

pub use linear::LinearPredictor;
pub use mlp::{frobenius_rebalance, rebalance_layers, Activation, HomogeneousMlp};
pub use params_io::{read_params, write_params};

use nalgebra::DVector;

use crate::data::{norm, Dataset};
use crate::error::{LabError, Result};

/// Shape of one weight matrix, `rows x cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub trait Predictor: Send + Sync {
    fn input_dim(&self) -> usize;

    fn num_params(&self) -> usize;

    /// Homogeneity degree `alpha`: `f(c theta, x) = c^alpha f(theta, x)`.
    fn degree(&self) -> f64;

    fn layer_shapes(&self) -> Vec<LayerShape>;

    /// Unchecked forward pass.
    fn eval(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Adds `scale * grad_theta f(theta, x)` into `out` and returns `f(theta, x)`.
    fn accumulate_grad(&self, theta: &[f64], x: &[f64], scale: f64, out: &mut [f64]) -> f64;

    fn init(&self, seed: u64, scale: f64) -> DVector<f64>;

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(LabError::structural(format!(
                "parameter vector has length {}, predictor needs {}",
                theta.len(),
                self.num_params()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(LabError::structural(format!(
                "input has dimension {}, predictor expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check(theta, x)?;
        Ok(self.eval(theta, x))
    }

    fn grad_theta(&self, theta: &[f64], x: &[f64]) -> Result<DVector<f64>> {
        self.check(theta, x)?;
        let mut g = DVector::zeros(self.num_params());
        self.accumulate_grad(theta, x, 1.0, g.as_mut_slice());
        Ok(g)
    }

    fn depth(&self) -> usize {
        self.layer_shapes().len()
    }

    fn is_linear(&self) -> bool {
        self.depth() == 1
    }
}

/// Normalized margin `min_i y_i f(theta, x_i) / ||theta||^alpha` and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReading {
    pub gamma_tilde: f64,
    pub argmin_index: usize,
    pub norm_theta: f64,
    pub alpha: f64,
}

pub fn normalized_margin(predictor: &dyn Predictor, theta: &[f64], data: &Dataset) -> Result<MarginReading> {
    if data.dim() != predictor.input_dim() || theta.len() != predictor.num_params() {
        return Err(LabError::structural("predictor, parameters and data disagree on dimensions"));
    }
    let norm_theta = norm(theta);
    if norm_theta == 0.0 {
        return Err(LabError::domain("normalized margin undefined at theta = 0"));
    }
    let alpha = predictor.degree();
    let (mut best, mut argmin) = (f64::INFINITY, 0);
    for (i, x) in data.rows().enumerate() {
        let m = data.label(i) * predictor.eval(theta, x);
        // strict < keeps the lowest index on ties
        if m < best {
            best = m;
            argmin = i;
        }
    }
    Ok(MarginReading {
        gamma_tilde: best / norm_theta.powf(alpha),
        argmin_index: argmin,
        norm_theta,
        alpha,
    })
}

/// Per-sample normalized margins `y_i f(theta, x_i) / ||theta||^alpha`.
pub fn normalized_margins(predictor: &dyn Predictor, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    let norm_theta = norm(theta);
    if norm_theta == 0.0 {
        return Err(LabError::domain("normalized margin undefined at theta = 0"));
    }
    let scale = norm_theta.powf(predictor.degree());
    data.rows()
        .enumerate()
        .map(|(i, x)| Ok(data.label(i) * predictor.forward(theta, x)? / scale))
        .collect()
}

/// Frobenius norm of each layer.
pub fn layer_norms(predictor: &dyn Predictor, theta: &[f64]) -> Vec<f64> {
    let mut offset = 0;
    predictor
        .layer_shapes()
        .iter()
        .map(|s| {
            let n = norm(&theta[offset..offset + s.len()]);
            offset += s.len();
            n
        })
        .collect()
}

/// Product of layer Frobenius norms; a Lipschitz constant of `x -> f(theta, x)`
/// for 1-Lipschitz activations.
pub fn frobenius_product(predictor: &dyn Predictor, theta: &[f64]) -> f64 {
    layer_norms(predictor, theta).iter().product()
}

/// Config-level choice of predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearPredictor),
    Mlp(HomogeneousMlp),
}

impl Model {
    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            Model::Linear(p) => p,
            Model::Mlp(p) => p,
        }
    }
}
