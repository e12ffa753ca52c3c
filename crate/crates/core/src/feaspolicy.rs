//! The feasibility policy: a state-conditioned generator that maps latents
//! `z ∈ [-1, 1]^d` to actions, pretrained to spread its outputs uniformly
//! over the feasible set.

use rayon::prelude::*;

use crate::autodiff::{Activation, AdamState, Matrix, NetworkParams, ParamVars, Tape, Var};
use crate::density::{self, SampleBatch};
use crate::env::{ObsSpec, PartialGenerator, PartialState, ToyDiskState};
use crate::feasibility::FeasibilityModel;
use crate::geometry::Vec2;
use crate::nets::{DeepSet, ObsBatch};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Pretraining settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasTrainConfig {
    /// Latent samples per state (`N`).
    pub samples: usize,
    /// States per gradient step (`K`).
    pub states: usize,
    /// KDE bandwidth `σ`.
    pub sigma: f64,
    /// `σ' = factor · σ`.
    pub sigma_prime_factor: f64,
    pub steps: usize,
    pub lr: f64,
    pub eval_interval: usize,
    /// Generated actions per evaluation state (`M`).
    pub eval_samples: usize,
    pub eval_states: usize,
    pub hidden: Vec<usize>,
    pub encoder_width: usize,
    /// Output-layer init scale.
    pub init_scale: f64,
    /// Gain `κ` of the latent skip term, `a = tanh(f(s, z) + κ z)`.
    pub latent_skip: f64,
}

impl Default for FeasTrainConfig {
    fn default() -> Self {
        FeasTrainConfig {
            samples: 1024,
            states: 16,
            sigma: 0.1,
            sigma_prime_factor: 2.0,
            steps: 500_000,
            lr: 1e-4,
            eval_interval: 1000,
            eval_samples: 1024,
            eval_states: 8,
            hidden: vec![256, 256],
            encoder_width: 64,
            init_scale: 1.0,
            latent_skip: 1.5,
        }
    }
}

impl FeasTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.states == 0 {
            return Err(Error::config("feasibility samples and states must be at least 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("feasibility sigma must be positive"));
        }
        if !(self.sigma_prime_factor >= 1.0) {
            return Err(Error::config("sigma prime factor must be at least 1"));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::config("feasibility init scale must be positive"));
        }
        if !(self.latent_skip >= 0.0) || !self.latent_skip.is_finite() {
            return Err(Error::config("latent skip gain must be finite and non-negative"));
        }
        if self.eval_samples < 2 {
            return Err(Error::config("evaluation needs at least 2 samples per state"));
        }
        Ok(())
    }

    pub fn sigma_prime(&self) -> f64 {
        self.sigma * self.sigma_prime_factor
    }
}

/// Maps latents to actions for a given partial state.
pub trait LatentMap: Sync {
    fn action_dim(&self) -> usize;

    /// One output row per latent row.
    fn map_batch(&self, s: &PartialState, latents: &Matrix) -> Matrix;

    fn map(&self, s: &PartialState, z: &[f64]) -> Vec<f64> {
        self.map_batch(s, &Matrix::row_vector(z)).into_vec()
    }
}

/// Generator network, `a = tanh(f(s, z) + κ z)` with a deep-set `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityPolicy {
    pub net: DeepSet,
    pub params: NetworkParams,
    pub latent_skip: f64,
}

impl FeasibilityPolicy {
    pub fn new(
        spec: ObsSpec,
        action_dim: usize,
        hidden: &[usize],
        encoder_width: usize,
        init_scale: f64,
        latent_skip: f64,
        rng: &mut Rng,
    ) -> Self {
        let net = DeepSet::new(spec, action_dim, hidden, action_dim, Activation::Identity).with_encoder_width(encoder_width);
        let params = net.init(init_scale, rng);
        FeasibilityPolicy { net, params, latent_skip }
    }

    pub fn for_generator(gen: &PartialGenerator, cfg: &FeasTrainConfig, rng: &mut Rng) -> Self {
        Self::new(gen.partial_spec(), gen.action_dim(), &cfg.hidden, cfg.encoder_width, cfg.init_scale, cfg.latent_skip, rng)
    }

    /// Taped forward pass for a batch of latents sharing one state.
    pub fn forward<'t>(&self, tape: &'t Tape, pv: &ParamVars<'t>, obs: &ObsBatch, latents: &Matrix) -> Var<'t> {
        let pre = self.net.forward_shared(tape, pv, obs, tape.constant(latents.clone()));
        if self.latent_skip == 0.0 {
            return pre.tanh();
        }
        pre.add(tape.constant(latents.map(|v| self.latent_skip * v))).tanh()
    }

    pub fn with_params(mut self, params: NetworkParams) -> Result<Self> {
        self.net.check(&params)?;
        self.params = params;
        Ok(self)
    }

    fn obs(&self, s: &PartialState) -> ObsBatch {
        ObsBatch::single(&s.observation(), &self.net.spec).expect("partial state matches the policy's spec")
    }
}

impl LatentMap for FeasibilityPolicy {
    fn action_dim(&self) -> usize {
        self.net.output_dim
    }

    fn map_batch(&self, s: &PartialState, latents: &Matrix) -> Matrix {
        let pre = self.net.eval_shared(&self.params, &self.obs(s), latents).expect("latent width matches the policy");
        let k = self.latent_skip;
        Matrix::from_vec(pre.rows(), pre.cols(), pre.data().iter().zip(latents.data()).map(|(f, z)| (f + k * z).tanh()).collect())
    }
}

/// `a = z`: the uniform generator over the action box.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMap(pub usize);

impl LatentMap for IdentityMap {
    fn action_dim(&self) -> usize {
        self.0
    }

    fn map_batch(&self, _s: &PartialState, latents: &Matrix) -> Matrix {
        latents.clone()
    }
}

/// Closed-form map of the square onto the two toy disks: the sign of `z₀`
/// picks the disk, `(2|z₀| − 1, z₁)/√2` places the point inside it.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiskMap;

impl DiskMap {
    fn apply(d: &ToyDiskState, z: &[f64]) -> [f64; 2] {
        let k = if z[0] < 0.0 { 0 } else { 1 };
        let u = Vec2::new(2.0 * z[0].abs().min(1.0) - 1.0, z[1].clamp(-1.0, 1.0)) / std::f64::consts::SQRT_2;
        let p = d.centers[k] + u * (0.999 * d.radii[k]);
        [p.x, p.y]
    }
}

impl LatentMap for DiskMap {
    fn action_dim(&self) -> usize {
        2
    }

    fn map_batch(&self, s: &PartialState, latents: &Matrix) -> Matrix {
        let PartialState::Disks(d) = s else { panic!("disk map needs a disk state") };
        let rows: Vec<[f64; 2]> = (0..latents.rows()).map(|i| Self::apply(d, latents.row(i))).collect();
        Matrix::from_rows(&rows)
    }
}

pub fn uniform_latents(n: usize, d: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(n, d);
    for v in m.data_mut() {
        *v = rng::uniform(rng, -1.0, 1.0);
    }
    m
}

/// Sample batch for one state under the current parameters.
pub fn sample_batch(
    policy: &FeasibilityPolicy,
    state: &PartialState,
    state_id: u64,
    cfg: &FeasTrainConfig,
    model: &dyn FeasibilityModel,
    rng: &mut Rng,
) -> Result<SampleBatch> {
    let d = policy.action_dim();
    let latents = uniform_latents(cfg.samples, d, rng);
    let actions = policy.map_batch(state, &latents);
    let noise = density::proposal_noise(cfg.samples, d, cfg.sigma_prime(), rng)?;
    SampleBatch::build(state_id, latents, actions, noise, cfg.sigma, cfg.sigma_prime(), |a| model.feasible(state, a))
}

/// JS gradient for one batch; `None` when the state had no feasible samples.
pub fn batch_gradient(
    policy: &FeasibilityPolicy,
    state: &PartialState,
    batch: &SampleBatch,
    sigma: f64,
) -> Result<Option<density::JsGradient>> {
    let obs = policy.obs(state);
    density::js_gradient(&policy.params, batch, sigma, |tape, pv, lat| policy.forward(tape, pv, &obs, lat))
}

/// Evaluation summary for a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasEvalReport {
    /// Fraction of generated actions that are feasible.
    pub precision: f64,
    /// Mean pairwise distance among feasible actions, averaged over states
    /// with at least two of them; `None` if no state had two.
    pub coverage: Option<f64>,
    /// Per state, generated actions per feasible component (models that
    /// know their components only).
    pub modes: Vec<Vec<usize>>,
}

fn mean_pairwise_distance(points: &[&[f64]]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            total += points[i].iter().zip(points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            pairs += 1;
        }
    }
    Some(total / pairs as f64)
}

/// Generate `m` actions per state from uniform latents and score them.
pub fn evaluate(
    map: &dyn LatentMap,
    states: &[PartialState],
    m: usize,
    model: &dyn FeasibilityModel,
    seed: u64,
) -> Result<FeasEvalReport> {
    if m < 2 {
        return Err(Error::usage("evaluation needs at least 2 samples per state"));
    }
    let mut feasible_total = 0usize;
    let mut coverages = Vec::new();
    let mut modes = Vec::new();
    for (i, s) in states.iter().enumerate() {
        let mut r = rng::derived(seed, i as u64);
        let z = uniform_latents(m, map.action_dim(), &mut r);
        let a = map.map_batch(s, &z);
        let flags = model.feasible_batch(s, &a);
        let good: Vec<&[f64]> = (0..m).filter(|&k| flags[k]).map(|k| a.row(k)).collect();
        feasible_total += good.len();
        if let Some(c) = mean_pairwise_distance(&good) {
            coverages.push(c);
        }
        let mut hist = Vec::new();
        for k in 0..m {
            if let Some(c) = model.mode_of(s, a.row(k)) {
                if hist.len() <= c {
                    hist.resize(c + 1, 0);
                }
                hist[c] += 1;
            }
        }
        modes.push(hist);
    }
    let coverage = (!coverages.is_empty()).then(|| coverages.iter().sum::<f64>() / coverages.len() as f64);
    Ok(FeasEvalReport { precision: feasible_total as f64 / (m * states.len()).max(1) as f64, coverage, modes })
}

/// Progress handed to the pretraining callback at each evaluation.
#[derive(Debug)]
pub struct PretrainProgress<'a> {
    pub step: usize,
    pub report: FeasEvalReport,
    /// Samples dropped for non-finite weights since the previous evaluation.
    pub dropped: usize,
    /// States skipped for having no feasible samples, since the previous evaluation.
    pub skipped: usize,
    pub policy: &'a FeasibilityPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PretrainStats {
    pub steps: usize,
    pub skipped_states: usize,
    pub dropped_samples: usize,
    pub noop_steps: usize,
}

const STATE_STREAM: u64 = 0x5354_4154;
const SAMPLE_STREAM: u64 = 0x5341_4d50;
const EVAL_STREAM: u64 = 0x4556_414c;

/// Fixed evaluation states for a generator and seed.
pub fn eval_states(gen: &PartialGenerator, count: usize, seed: u64) -> Vec<PartialState> {
    (0..count as u64).map(|i| gen.generate(rng::derive_seed(rng::derive_seed(seed, EVAL_STREAM), i))).collect()
}

/// Train `policy` in place. Each step draws `K` states, forms one JS gradient
/// per state, averages over the states that had feasible samples and applies
/// one Adam step. `on_eval` runs every `eval_interval` steps and after the
/// last one.
pub fn pretrain(
    cfg: &FeasTrainConfig,
    policy: &mut FeasibilityPolicy,
    gen: &PartialGenerator,
    model: &dyn FeasibilityModel,
    seed: u64,
    mut on_eval: impl FnMut(&PretrainProgress<'_>) -> Result<()>,
) -> Result<PretrainStats> {
    cfg.validate()?;
    if model.action_dim() != policy.action_dim() {
        return Err(Error::config("feasibility model and policy disagree on the action dimension"));
    }
    let mut adam = AdamState::new(policy.params.len());
    let mut stats = PretrainStats::default();
    let eval_set = eval_states(gen, cfg.eval_states, seed);
    let (mut dropped, mut skipped) = (0, 0);
    let state_seed = rng::derive_seed(seed, STATE_STREAM);
    let sample_seed = rng::derive_seed(seed, SAMPLE_STREAM);
    for step in 0..cfg.steps {
        let results: Vec<Result<Option<density::JsGradient>>> = (0..cfg.states)
            .into_par_iter()
            .map(|k| {
                let id = (step * cfg.states + k) as u64;
                let state = gen.generate(rng::derive_seed(state_seed, id));
                let mut r = rng::derived(sample_seed, id);
                let batch = sample_batch(policy, &state, id, cfg, model, &mut r)?;
                batch_gradient(policy, &state, &batch, cfg.sigma)
            })
            .collect();
        let mut sum = vec![0.0; policy.params.len()];
        let mut used = 0usize;
        for r in results {
            match r? {
                Some(g) => {
                    for (s, v) in sum.iter_mut().zip(&g.grad) {
                        *s += v;
                    }
                    dropped += g.dropped;
                    stats.dropped_samples += g.dropped;
                    used += 1;
                }
                None => {
                    skipped += 1;
                    stats.skipped_states += 1;
                }
            }
        }
        if used > 0 {
            let scale = 1.0 / used as f64;
            sum.iter_mut().for_each(|v| *v *= scale);
            adam.step(policy.params.values_mut(), &sum, cfg.lr)?;
        } else {
            stats.noop_steps += 1;
        }
        stats.steps = step + 1;
        let last = step + 1 == cfg.steps;
        if cfg.eval_interval > 0 && ((step + 1) % cfg.eval_interval == 0 || last) {
            let report = evaluate(&*policy, &eval_set, cfg.eval_samples, model, rng::derive_seed(seed, EVAL_STREAM))?;
            on_eval(&PretrainProgress { step: step + 1, report, dropped, skipped, policy })?;
            dropped = 0;
            skipped = 0;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::ToyFeasibility;

    #[test]
    fn disk_map_stays_inside() {
        let s = PartialState::Disks(ToyDiskState::default());
        let mut r = rng::seeded(0);
        let z = uniform_latents(2000, 2, &mut r);
        let a = DiskMap.map_batch(&s, &z);
        for i in 0..2000 {
            assert!(ToyFeasibility.feasible(&s, a.row(i)));
        }
    }

    #[test]
    fn pairwise_distance_of_identical_points_is_zero() {
        let p = [0.3, 0.1];
        assert_eq!(mean_pairwise_distance(&[&p, &p, &p]), Some(0.0));
        assert_eq!(mean_pairwise_distance(&[&p]), None);
    }

    #[test]
    fn config_validation() {
        assert!(FeasTrainConfig::default().validate().is_ok());
        assert!(FeasTrainConfig { sigma: 0.0, ..Default::default() }.validate().is_err());
        assert!(FeasTrainConfig { states: 0, ..Default::default() }.validate().is_err());
        assert!(FeasTrainConfig { sigma_prime_factor: 0.5, ..Default::default() }.validate().is_err());
    }
}
