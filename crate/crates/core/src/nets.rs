//! Permutation-invariant observation encoders.
//!
//! Each entity set passes through its own shared dense layer and is summed
//! per observation; the pooled codes are concatenated with the ego features
//! and an optional extra input (the latent, for the feasibility policy) and
//! fed to an MLP trunk. Parameter layers are ordered
//! `[set encoders..., trunk layers...]`.

use crate::autodiff::{mlp_shapes, Activation, LayerShape, Matrix, NetworkParams, ParamVars, Tape, Var};
use crate::env::{ObsSpec, Observation};
use crate::rng::Rng;
use crate::{Error, Result};

/// Observations stacked for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch {
    pub ego: Matrix,
    /// Per set: all entities stacked row-wise, plus the count per observation.
    pub sets: Vec<(Matrix, Vec<usize>)>,
}

impl ObsBatch {
    pub fn new(obs: &[&Observation], spec: &ObsSpec) -> Result<Self> {
        for o in obs {
            if !o.conforms(spec) {
                return Err(Error::config("observation does not match the network's spec"));
            }
        }
        let ego = Matrix::from_vec(obs.len(), spec.ego_dim, obs.iter().flat_map(|o| o.ego.iter().copied()).collect());
        let sets = spec
            .set_dims
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let counts: Vec<usize> = obs.iter().map(|o| o.sets[k].len()).collect();
                let data: Vec<f64> = obs.iter().flat_map(|o| o.sets[k].iter().flatten().copied()).collect();
                (Matrix::from_vec(counts.iter().sum(), w, data), counts)
            })
            .collect();
        Ok(ObsBatch { ego, sets })
    }

    pub fn single(obs: &Observation, spec: &ObsSpec) -> Result<Self> {
        Self::new(&[obs], spec)
    }

    /// The same observation repeated `n` times.
    pub fn repeat(obs: &Observation, spec: &ObsSpec, n: usize) -> Result<Self> {
        Self::new(&vec![obs; n], spec)
    }

    pub fn len(&self) -> usize {
        self.ego.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deep-set network shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepSet {
    pub spec: ObsSpec,
    pub extra_dim: usize,
    pub encoder_width: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl DeepSet {
    pub fn new(spec: ObsSpec, extra_dim: usize, hidden: &[usize], output_dim: usize, output_activation: Activation) -> Self {
        DeepSet {
            spec,
            extra_dim,
            encoder_width: 32,
            hidden: hidden.to_vec(),
            output_dim,
            hidden_activation: Activation::Relu,
            output_activation,
        }
    }

    pub fn with_encoder_width(mut self, width: usize) -> Self {
        self.encoder_width = width;
        self
    }

    pub fn with_hidden_activation(mut self, act: Activation) -> Self {
        self.hidden_activation = act;
        self
    }

    fn n_sets(&self) -> usize {
        self.spec.set_dims.len()
    }

    fn trunk_input(&self) -> usize {
        self.spec.ego_dim + self.n_sets() * self.encoder_width + self.extra_dim
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut shapes: Vec<LayerShape> =
            self.spec.set_dims.iter().map(|&w| LayerShape::new(self.encoder_width, w, Activation::Relu)).collect();
        let mut sizes = vec![self.trunk_input()];
        sizes.extend(&self.hidden);
        sizes.push(self.output_dim);
        shapes.extend(mlp_shapes(&sizes, self.hidden_activation, self.output_activation));
        shapes
    }

    /// Fresh parameters; the output layer's weights are scaled by `last_scale`.
    pub fn init(&self, last_scale: f64, rng: &mut Rng) -> NetworkParams {
        NetworkParams::init(self.layer_shapes(), last_scale, rng)
    }

    pub fn check(&self, params: &NetworkParams) -> Result<()> {
        if params.layers() != self.layer_shapes().as_slice() {
            return Err(Error::config("parameter layout does not match the network"));
        }
        Ok(())
    }

    fn check_extra(&self, batch: &ObsBatch, extra: Option<&Matrix>) -> Result<()> {
        match extra {
            None if self.extra_dim == 0 => Ok(()),
            Some(e) if e.cols() == self.extra_dim && e.rows() == batch.len() => Ok(()),
            _ => Err(Error::config("extra input does not match the network")),
        }
    }

    /// Plain evaluation, one output row per observation.
    pub fn eval(&self, params: &NetworkParams, batch: &ObsBatch, extra: Option<&Matrix>) -> Result<Matrix> {
        self.check_extra(batch, extra)?;
        let k = self.n_sets();
        let mut parts = vec![batch.ego.clone()];
        for (i, (entities, counts)) in batch.sets.iter().enumerate() {
            let enc = params.forward_range(i..i + 1, entities)?;
            let mut pooled = Matrix::zeros(batch.len(), self.encoder_width);
            let mut row = 0;
            for (b, &c) in counts.iter().enumerate() {
                let out = pooled.row_mut(b);
                for r in row..row + c {
                    for (o, v) in out.iter_mut().zip(enc.row(r)) {
                        *o += v;
                    }
                }
                row += c;
            }
            parts.push(pooled);
        }
        if let Some(e) = extra {
            parts.push(e.clone());
        }
        let input = hcat(&parts);
        params.forward_range(k..params.layers().len(), &input)
    }

    /// Taped forward pass for training.
    pub fn forward<'t>(&self, tape: &'t Tape, pv: &ParamVars<'t>, batch: &ObsBatch, extra: Option<Var<'t>>) -> Var<'t> {
        let k = self.n_sets();
        let mut parts = vec![tape.constant(batch.ego.clone())];
        for (i, (entities, counts)) in batch.sets.iter().enumerate() {
            let x = tape.constant(entities.clone());
            parts.push(pv.dense(i, x).segment_sum(counts));
        }
        if let Some(e) = extra {
            parts.push(e);
        }
        let input = Var::concat_cols(&parts);
        pv.dense_range(k..pv.num_layers(), input)
    }
}

impl DeepSet {
    /// Encode one observation once and pair it with each row of `extra`.
    pub fn eval_shared(&self, params: &NetworkParams, obs: &ObsBatch, extra: &Matrix) -> Result<Matrix> {
        if obs.len() != 1 || extra.cols() != self.extra_dim {
            return Err(Error::config("shared evaluation needs one observation and matching extra input"));
        }
        let k = self.n_sets();
        let mut head = vec![obs.ego.clone()];
        for (i, (entities, _)) in obs.sets.iter().enumerate() {
            let enc = params.forward_range(i..i + 1, entities)?;
            let mut pooled = Matrix::zeros(1, self.encoder_width);
            for r in 0..enc.rows() {
                for (o, v) in pooled.row_mut(0).iter_mut().zip(enc.row(r)) {
                    *o += v;
                }
            }
            head.push(pooled);
        }
        let head = hcat(&head);
        let n = extra.rows();
        let mut rows = Matrix::zeros(n, head.cols());
        for r in 0..n {
            rows.row_mut(r).copy_from_slice(head.row(0));
        }
        params.forward_range(k..params.layers().len(), &hcat(&[rows, extra.clone()]))
    }

    /// Taped counterpart of [`DeepSet::eval_shared`].
    pub fn forward_shared<'t>(&self, tape: &'t Tape, pv: &ParamVars<'t>, obs: &ObsBatch, extra: Var<'t>) -> Var<'t> {
        let k = self.n_sets();
        let n = extra.shape().0;
        let mut head = vec![tape.constant(obs.ego.clone())];
        for (i, (entities, counts)) in obs.sets.iter().enumerate() {
            let x = tape.constant(entities.clone());
            head.push(pv.dense(i, x).segment_sum(counts));
        }
        let head = Var::concat_cols(&head).repeat_rows(n);
        pv.dense_range(k..pv.num_layers(), Var::concat_cols(&[head, extra]))
    }
}

/// Horizontal concatenation.
pub fn hcat(parts: &[Matrix]) -> Matrix {
    let rows = parts[0].rows();
    let cols: usize = parts.iter().map(Matrix::cols).sum();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let o = out.row_mut(r);
        let mut c = 0;
        for p in parts {
            o[c..c + p.cols()].copy_from_slice(p.row(r));
            c += p.cols();
        }
    }
    out
}
