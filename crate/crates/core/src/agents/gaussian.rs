//! Tanh-squashed diagonal Gaussians over the latent cube.

use crate::autodiff::{Matrix, Var};
use crate::rng::{self, Rng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Floor on `1 − z²` inside the squash correction.
pub const SQUASH_FLOOR: f64 = 1e-6;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// Mean and clamped log-std of one action distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianHead {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean and log-std lengths differ");
        let log_std = log_std.into_iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        GaussianHead { mean, log_std }
    }

    /// Split a network output row `[μ, log σ]`.
    pub fn from_row(row: &[f64]) -> Self {
        let d = row.len() / 2;
        Self::new(row[..d].to_vec(), row[d..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.exp()).collect()
    }
}

/// One draw: the pre-squash value, the latent and its log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub pre_tanh: Vec<f64>,
    pub z: Vec<f64>,
    pub log_prob: f64,
}

fn squash_correction(z: f64) -> f64 {
    (1.0 - z * z).max(SQUASH_FLOOR).ln()
}

/// `log N(x | μ, σ) − Σ log(1 − tanh(x)²)`.
pub fn squashed_log_prob(head: &GaussianHead, pre_tanh: &[f64]) -> f64 {
    let mut lp = 0.0;
    for k in 0..head.dim() {
        let e = (pre_tanh[k] - head.mean[k]) / head.log_std[k].exp();
        lp += -0.5 * e * e - head.log_std[k] - HALF_LOG_2PI - squash_correction(pre_tanh[k].tanh());
    }
    lp
}

/// Sample with given standard-normal noise `eps`.
pub fn squashed_from_noise(head: &GaussianHead, eps: &[f64]) -> SquashedSample {
    let pre_tanh: Vec<f64> = (0..head.dim()).map(|k| head.mean[k] + head.log_std[k].exp() * eps[k]).collect();
    let z: Vec<f64> = pre_tanh.iter().map(|x| x.tanh()).collect();
    let mut log_prob = 0.0;
    for k in 0..head.dim() {
        log_prob += -0.5 * eps[k] * eps[k] - head.log_std[k] - HALF_LOG_2PI - squash_correction(z[k]);
    }
    SquashedSample { pre_tanh, z, log_prob }
}

pub fn squashed_sample(head: &GaussianHead, rng: &mut Rng) -> SquashedSample {
    let eps: Vec<f64> = (0..head.dim()).map(|_| rng::normal(rng)).collect();
    squashed_from_noise(head, &eps)
}

/// Standard-normal noise matrix.
pub fn noise(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng::normal(rng);
    }
    m
}

/// Split a taped `n × 2d` head output into mean and clamped log-std.
pub fn split_head(out: Var<'_>) -> (Var<'_>, Var<'_>) {
    let d = out.shape().1 / 2;
    (out.slice_cols(0, d), out.slice_cols(d, d).clamp(LOG_STD_MIN, LOG_STD_MAX))
}

fn taped_correction(z: Var<'_>) -> Var<'_> {
    z.square().neg().add_scalar(1.0).floor_at(SQUASH_FLOOR).ln()
}

/// Reparameterized sample `z = tanh(μ + σ ε)` and its log-density column.
pub fn taped_rsample<'t>(mean: Var<'t>, log_std: Var<'t>, eps: &Matrix) -> (Var<'t>, Var<'t>) {
    let tape = mean.tape();
    let e = tape.constant(eps.clone());
    let z = mean.add(log_std.exp().mul(e)).tanh();
    let base = tape.constant(eps.map(|v| -0.5 * v * v - HALF_LOG_2PI));
    let lp = base.sub(log_std).sub(taped_correction(z)).row_sum();
    (z, lp)
}

/// Log-density column of stored pre-squash values.
pub fn taped_log_prob<'t>(mean: Var<'t>, log_std: Var<'t>, pre_tanh: &Matrix) -> Var<'t> {
    let tape = mean.tape();
    let x = tape.constant(pre_tanh.clone());
    let corr = tape.constant(pre_tanh.map(|v| squash_correction(v.tanh())));
    let e = x.sub(mean).div(log_std.exp());
    e.square().scale(-0.5).sub(log_std).add_scalar(-HALF_LOG_2PI).sub(corr).row_sum()
}

/// Entropy of the pre-squash Gaussian, one value per row.
pub fn taped_entropy(log_std: Var<'_>) -> Var<'_> {
    log_std.add_scalar(0.5 + HALF_LOG_2PI).row_sum()
}
