//! Objective-policy learners: SAC and PPO over the latent cube, their
//! Lagrangian variants, and the replacement/resampling/projection wrappers.
//!
//! Every learner sees latents `z ∈ (-1, 1)^d`. With action mapping a
//! feasibility policy turns `z` into the action; without it `z` is the
//! action itself.

mod buffer;
mod gaussian;
mod ppo;
mod runner;
mod sac;
mod wrappers;

pub use buffer::{gae, normalize, ReplayBuffer, RolloutBuffer, RolloutRecord, Transition};
pub use gaussian::{
    noise, split_head, squashed_from_noise, squashed_log_prob, squashed_sample, taped_entropy, taped_log_prob,
    taped_rsample, GaussianHead, SquashedSample, LOG_STD_MAX, LOG_STD_MIN, SQUASH_FLOOR,
};
pub use ppo::{ppo_policy_loss, value_loss, PpoAgent, PpoBatch, PpoStats, Prepared, MAX_LOG_RATIO};
pub use runner::{
    evaluate_episodes, Decision, DecisionStats, EpisodeRecord, Learner, Method, ProgressRecord, Trainer, TrainSummary,
};
pub use sac::{actor_loss, critic_loss, ActorLossInputs, SacAgent, SacBatch, SacStats};
pub use wrappers::{project, resample, ProjectionConfig, ProjectionResult, Wrapper};

use crate::autodiff::{Activation, Matrix, NetworkParams};
use crate::env::{ObsSpec, Observation};
use crate::nets::{DeepSet, ObsBatch};
use crate::{Error, Result};

/// Learner hyperparameters. SAC-only and PPO-only fields are ignored by the
/// other algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Entropy coefficient `α`.
    pub entropy_coef: f64,
    /// Polyak factor for SAC target critics.
    pub tau: f64,
    /// Environment steps before SAC starts updating the actor.
    pub policy_delay: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// SAC performs `gradient_steps` updates every `train_every` environment steps.
    pub train_every: usize,
    pub gradient_steps: usize,
    pub rollout_size: usize,
    pub rollout_epochs: usize,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub normalize_advantages: bool,
    pub workers: usize,
    pub hidden: Vec<usize>,
    pub encoder_width: usize,
    /// Cost discount for the SAC safety critic.
    pub cost_gamma: f64,
    /// Safety threshold `δ_C`.
    pub cost_threshold: f64,
    pub safety_critic_lr: f64,
    pub lambda_lr: f64,
    pub lambda_init: f64,
}

impl AgentConfig {
    pub fn sac() -> Self {
        AgentConfig {
            gamma: 0.97,
            actor_lr: 3e-5,
            critic_lr: 1e-4,
            entropy_coef: 2e-4,
            tau: 0.005,
            policy_delay: 2048,
            batch_size: 128,
            replay_capacity: 1_000_000,
            train_every: 50,
            gradient_steps: 2,
            rollout_size: 10_000,
            rollout_epochs: 3,
            gae_lambda: 0.9,
            clip_eps: 0.2,
            normalize_advantages: true,
            workers: 50,
            hidden: vec![256, 256, 256],
            encoder_width: 64,
            cost_gamma: 0.9,
            cost_threshold: 0.05,
            safety_critic_lr: 1e-4,
            lambda_lr: 0.01,
            lambda_init: 0.0,
        }
    }

    pub fn ppo() -> Self {
        AgentConfig { entropy_coef: 5e-3, ..Self::sac() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.gae_lambda) || !unit(self.cost_gamma) || !unit(self.tau) {
            return Err(Error::config("gamma, gae_lambda, cost_gamma and tau must lie in [0, 1]"));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::config("clip_eps must be positive"));
        }
        if self.batch_size == 0 || self.workers == 0 || self.rollout_size == 0 || self.replay_capacity == 0 {
            return Err(Error::config("batch_size, workers, rollout_size and replay_capacity must be positive"));
        }
        if self.train_every == 0 {
            return Err(Error::config("train_every must be positive"));
        }
        if self.lambda_init < 0.0 {
            return Err(Error::config("lambda_init must be non-negative"));
        }
        Ok(())
    }
}

/// Network producing `[μ, log σ]` over `d` latent dimensions.
pub fn actor_net(spec: &ObsSpec, d: usize, cfg: &AgentConfig) -> DeepSet {
    DeepSet::new(spec.clone(), 0, &cfg.hidden, 2 * d, Activation::Identity).with_encoder_width(cfg.encoder_width)
}

/// `Q(s, z)` network.
pub fn q_net(spec: &ObsSpec, d: usize, cfg: &AgentConfig) -> DeepSet {
    DeepSet::new(spec.clone(), d, &cfg.hidden, 1, Activation::Identity).with_encoder_width(cfg.encoder_width)
}

/// `V(s)` network.
pub fn v_net(spec: &ObsSpec, cfg: &AgentConfig) -> DeepSet {
    DeepSet::new(spec.clone(), 0, &cfg.hidden, 1, Activation::Identity).with_encoder_width(cfg.encoder_width)
}

/// Gaussian heads for a batch of observations.
pub fn heads(net: &DeepSet, params: &NetworkParams, obs: &ObsBatch) -> Vec<GaussianHead> {
    let out = net.eval(params, obs, None).expect("actor input matches its spec");
    (0..out.rows()).map(|r| GaussianHead::from_row(out.row(r))).collect()
}

pub(crate) fn single(obs: &Observation, spec: &ObsSpec) -> ObsBatch {
    ObsBatch::single(obs, spec).expect("observation matches the agent's spec")
}

pub(crate) fn column_values(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, 0)).collect()
}

pub(crate) fn check_loss(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss(format!("{name} = {v}")))
    }
}

pub(crate) fn check_grad(name: &str, g: &[f64]) -> Result<()> {
    match g.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFiniteLoss(format!("{name} gradient entry {i} is {}", g[i]))),
    }
}

/// `target ← (1 − τ) target + τ online`.
pub fn polyak(target: &mut NetworkParams, online: &NetworkParams, tau: f64) {
    for (t, o) in target.values_mut().iter_mut().zip(online.values()) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}
