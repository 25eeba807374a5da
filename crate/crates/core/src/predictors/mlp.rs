use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{layer_norms, LayerShape, Predictor};
use crate::data::norm;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// 1-Lipschitz and 1-positive-homogeneous, but not smooth at 0.
    #[default]
    Relu,
    /// `u^2`: smooth, 2-homogeneous.
    Square,
}

impl Activation {
    #[inline]
    fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Relu => u.max(0.0),
            Activation::Square => u * u,
        }
    }

    /// Derivative, taking 0 at the ReLU kink.
    #[inline]
    fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Square => 2.0 * u,
        }
    }

    fn power(self) -> f64 {
        match self {
            Activation::Relu => 1.0,
            Activation::Square => 2.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Some(Activation::Relu),
            "square" | "quadratic" => Some(Activation::Square),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Square => "square",
        }
    }
}

/// Bias-free feedforward network `W_H s(W_{H-1} s(... s(W_1 x)))` with scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousMlp {
    layer_dims: Vec<usize>,
    activation: Activation,
    shapes: Vec<LayerShape>,
}

impl HomogeneousMlp {
    /// `layer_dims = [d, h_1, ..., h_{H-1}, 1]`.
    pub fn new(layer_dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(LabError::structural("an MLP needs at least input and output dims"));
        }
        if *layer_dims.last().unwrap() != 1 {
            return Err(LabError::structural("the output layer must have width 1"));
        }
        if layer_dims.contains(&0) {
            return Err(LabError::structural("layer widths must be positive"));
        }
        let shapes = layer_dims
            .windows(2)
            .map(|w| LayerShape { rows: w[1], cols: w[0] })
            .collect();
        Ok(Self { layer_dims, activation, shapes })
    }

    pub fn relu(layer_dims: Vec<usize>) -> Result<Self> {
        Self::new(layer_dims, Activation::Relu)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn layers<'a>(&self, theta: &'a [f64]) -> Vec<&'a [f64]> {
        let mut offset = 0;
        self.shapes
            .iter()
            .map(|s| {
                let w = &theta[offset..offset + s.len()];
                offset += s.len();
                w
            })
            .collect()
    }
}

fn matvec(w: &[f64], shape: LayerShape, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(w.chunks_exact(shape.cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()));
}

impl Predictor for HomogeneousMlp {
    fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn num_params(&self) -> usize {
        self.shapes.iter().map(LayerShape::len).sum()
    }

    fn degree(&self) -> f64 {
        let p = self.activation.power();
        (1..self.shapes.len()).fold(1.0, |deg, _| p * deg + 1.0)
    }

    fn layer_shapes(&self) -> Vec<LayerShape> {
        self.shapes.clone()
    }

    fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        let layers = self.layers(theta);
        let mut z = x.to_vec();
        let mut a = Vec::new();
        for (h, (w, shape)) in layers.iter().zip(&self.shapes).enumerate() {
            matvec(w, *shape, &z, &mut a);
            if h + 1 < layers.len() {
                z.clear();
                z.extend(a.iter().map(|&u| self.activation.apply(u)));
            }
        }
        a[0]
    }

    fn accumulate_grad(&self, theta: &[f64], x: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        let layers = self.layers(theta);
        let depth = layers.len();
        // inputs[h] feeds layer h; pre[h] is W_h inputs[h]
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(depth);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(depth);
        inputs.push(x.to_vec());
        for h in 0..depth {
            let mut a = Vec::new();
            matvec(layers[h], self.shapes[h], &inputs[h], &mut a);
            if h + 1 < depth {
                inputs.push(a.iter().map(|&u| self.activation.apply(u)).collect());
            }
            pre.push(a);
        }
        let value = pre[depth - 1][0];

        let offsets: Vec<usize> = self
            .shapes
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s.len();
                Some(o)
            })
            .collect();
        let mut delta = vec![scale];
        for h in (0..depth).rev() {
            let shape = self.shapes[h];
            let grad = &mut out[offsets[h]..offsets[h] + shape.len()];
            for (r, &dr) in delta.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                for (g, &zc) in grad[r * shape.cols..(r + 1) * shape.cols].iter_mut().zip(&inputs[h]) {
                    *g += dr * zc;
                }
            }
            if h > 0 {
                let w = layers[h];
                let mut back = vec![0.0; shape.cols];
                for (r, &dr) in delta.iter().enumerate() {
                    for (b, &wv) in back.iter_mut().zip(&w[r * shape.cols..(r + 1) * shape.cols]) {
                        *b += dr * wv;
                    }
                }
                for (b, &a) in back.iter_mut().zip(&pre[h - 1]) {
                    *b *= self.activation.derivative(a);
                }
                delta = back;
            }
        }
        value
    }

    /// Entries i.i.d. `N(0, (scale / sqrt(fan_in))^2)`.
    fn init(&self, seed: u64, scale: f64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(self.num_params());
        for shape in &self.shapes {
            let normal = Normal::new(0.0, scale / (shape.cols as f64).sqrt()).expect("positive std");
            theta.extend((0..shape.len()).map(|_| normal.sample(&mut rng)));
        }
        DVector::from_vec(theta)
    }
}

/// Rescales every layer to the geometric mean of the layer Frobenius norms.
///
/// For a 1-homogeneous activation the network function is unchanged.
pub fn rebalance_layers(mlp: &HomogeneousMlp, theta: &[f64]) -> Result<DVector<f64>> {
    if mlp.activation() != Activation::Relu {
        return Err(LabError::domain("layer rebalancing needs a 1-homogeneous activation"));
    }
    if theta.len() != mlp.num_params() {
        return Err(LabError::structural("parameter length does not match the network"));
    }
    let norms = layer_norms(mlp, theta);
    if let Some(h) = norms.iter().position(|&n| n == 0.0) {
        return Err(LabError::Degenerate(format!("layer {h} is identically zero")));
    }
    let depth = norms.len() as f64;
    let g = (norms.iter().map(|n| n.ln()).sum::<f64>() / depth).exp();
    let mut out = Vec::with_capacity(theta.len());
    for (w, n) in mlp.layers(theta).iter().zip(&norms) {
        let s = g / n;
        out.extend(w.iter().map(|v| v * s));
    }
    Ok(DVector::from_vec(out))
}

/// Balanced representation of a unit-norm network: same function, every
/// layer with Frobenius norm `(prod_h ||W_h||_F)^{1/H} <= 1/sqrt(H)`.
pub fn frobenius_rebalance(mlp: &HomogeneousMlp, theta: &[f64]) -> Result<DVector<f64>> {
    let n = norm(theta);
    if (n - 1.0).abs() > 1e-9 {
        return Err(LabError::domain(format!("rebalancing expects ||theta|| = 1, got {n}")));
    }
    rebalance_layers(mlp, theta)
}
