use super::matrix::Matrix;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Pointwise nonlinearity applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(x),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
            Activation::Softplus => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            2 => Activation::Relu,
            3 => Activation::Softplus,
            _ => return None,
        })
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shape of one dense layer: `rows` outputs, `cols` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn new(rows: usize, cols: usize, activation: Activation) -> Self {
        LayerShape { rows, cols, activation }
    }

    pub fn param_count(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

/// Flat parameter vector for a stack of dense layers.
///
/// Each layer stores its weight matrix row-major (`rows × cols`) followed by
/// its `rows` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    values: Vec<f64>,
    layers: Vec<LayerShape>,
}

impl NetworkParams {
    pub fn new(layers: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = layers.iter().map(LayerShape::param_count).sum();
        if values.len() != expected {
            return Err(Error::config(format!(
                "parameter vector has {} values, layer shapes need {}",
                values.len(),
                expected
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("parameter {i} is not finite")));
        }
        Ok(NetworkParams { values, layers })
    }

    pub fn zeros(layers: Vec<LayerShape>) -> Self {
        let n = layers.iter().map(LayerShape::param_count).sum();
        NetworkParams { values: vec![0.0; n], layers }
    }

    /// Glorot-uniform weights and zero biases. The final layer's weights are
    /// multiplied by `last_scale`.
    pub fn init(layers: Vec<LayerShape>, last_scale: f64, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(layers);
        let n_layers = p.layers.len();
        for l in 0..n_layers {
            let shape = p.layers[l];
            let limit = (6.0 / (shape.rows + shape.cols) as f64).sqrt();
            let scale = if l + 1 == n_layers { last_scale } else { 1.0 };
            let (w, _) = p.layer_offsets(l);
            for v in &mut p.values[w..w + shape.rows * shape.cols] {
                *v = scale * rng::uniform(rng, -limit, limit);
            }
        }
        p
    }

    /// Plain MLP with `sizes = [in, h1, ..., out]`.
    pub fn mlp(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        Self::init(mlp_shapes(sizes, hidden, output), 1.0, rng)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    /// Start offsets of the weight block and the bias block of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.layers[..l].iter().map(LayerShape::param_count).sum();
        let s = self.layers[l];
        (start, start + s.rows * s.cols)
    }

    pub fn weight(&self, l: usize) -> Matrix {
        let s = self.layers[l];
        let (w, b) = self.layer_offsets(l);
        Matrix::from_vec(s.rows, s.cols, self.values[w..b].to_vec())
    }

    pub fn bias(&self, l: usize) -> Matrix {
        let s = self.layers[l];
        let (_, b) = self.layer_offsets(l);
        Matrix::from_vec(1, s.rows, self.values[b..b + s.rows].to_vec())
    }

    /// Sequential composition of all layers on one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::row_vector(input);
        Ok(self.forward_batch(&x)?.into_vec())
    }

    /// Sequential composition of all layers on a batch (one row per input).
    pub fn forward_batch(&self, input: &Matrix) -> Result<Matrix> {
        self.forward_range(0..self.layers.len(), input)
    }

    pub(crate) fn forward_range(&self, range: std::ops::Range<usize>, input: &Matrix) -> Result<Matrix> {
        let mut x = input.clone();
        for l in range {
            let s = self.layers[l];
            if x.cols() != s.cols {
                return Err(Error::config(format!(
                    "layer {l} expects {} inputs, got {}",
                    s.cols,
                    x.cols()
                )));
            }
            let (w, b) = self.layer_offsets(l);
            let weights = &self.values[w..b];
            let bias = &self.values[b..b + s.rows];
            let mut out = Matrix::zeros(x.rows(), s.rows);
            for r in 0..x.rows() {
                let xr = x.row(r);
                let o = out.row_mut(r);
                for j in 0..s.rows {
                    let z = super::matrix::dot(xr, &weights[j * s.cols..(j + 1) * s.cols]) + bias[j];
                    o[j] = s.activation.apply(z);
                }
            }
            x = out;
        }
        Ok(x)
    }
}

pub fn mlp_shapes(sizes: &[usize], hidden: Activation, output: Activation) -> Vec<LayerShape> {
    assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
    let n = sizes.len() - 1;
    (0..n)
        .map(|i| LayerShape::new(sizes[i + 1], sizes[i], if i + 1 == n { output } else { hidden }))
        .collect()
}
