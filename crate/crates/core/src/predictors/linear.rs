use nalgebra::DVector;

use super::{LayerShape, Predictor};
use crate::data::dot;

/// `f(theta, x) = theta^T x`, homogeneous of degree 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearPredictor {
    pub dim: usize,
}

impl LinearPredictor {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Predictor for LinearPredictor {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn num_params(&self) -> usize {
        self.dim
    }

    fn degree(&self) -> f64 {
        1.0
    }

    fn layer_shapes(&self) -> Vec<LayerShape> {
        vec![LayerShape { rows: 1, cols: self.dim }]
    }

    fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        dot(theta, x)
    }

    fn accumulate_grad(&self, theta: &[f64], x: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        for (o, xi) in out.iter_mut().zip(x) {
            *o += scale * xi;
        }
        dot(theta, x)
    }

    /// Linear runs start from the origin.
    fn init(&self, _seed: u64, _scale: f64) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
}
