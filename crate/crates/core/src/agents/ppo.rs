//! Proximal policy optimization with a clipped surrogate, optionally with a
//! cost value function and a Lagrange multiplier.

use rand::seq::SliceRandom;

use super::{
    actor_net, check_grad, check_loss, gae, heads, normalize, single, split_head, squashed_log_prob,
    squashed_sample, taped_entropy, taped_log_prob, v_net, AgentConfig, GaussianHead, RolloutBuffer, RolloutRecord,
    SquashedSample,
};
use crate::autodiff::{value_and_grad, AdamState, Matrix, NetworkParams, ParamVars, Tape, Var};
use crate::env::{ObsSpec, Observation};
use crate::nets::{DeepSet, ObsBatch};
use crate::rng::Rng;
use crate::Result;

/// Samples with `|log π − log π_old|` above this are skipped.
pub const MAX_LOG_RATIO: f64 = 20.0;

/// One minibatch of rollout samples.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub obs: ObsBatch,
    pub pre_tanh: Matrix,
    pub old_log_prob: Vec<f64>,
    /// Advantage the actor follows, `Â − λ Â_C` for Lagrangian agents.
    pub advantages: Vec<f64>,
}

/// `−mean(min(ρ Â, clip(ρ, 1 ± ε) Â)) − β · mean(entropy)`.
pub fn ppo_policy_loss<'t>(
    tape: &'t Tape,
    pv: &ParamVars<'t>,
    net: &DeepSet,
    b: &PpoBatch,
    clip_eps: f64,
    entropy_coef: f64,
) -> Var<'t> {
    let (mean, log_std) = split_head(net.forward(tape, pv, &b.obs, None));
    let log_prob = taped_log_prob(mean, log_std, &b.pre_tanh);
    let ratio = log_prob.sub(tape.constant(Matrix::column(&b.old_log_prob))).exp();
    let adv = tape.constant(Matrix::column(&b.advantages));
    let surrogate = ratio.mul(adv).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps).mul(adv));
    surrogate.mean().neg().sub(taped_entropy(log_std).mean().scale(entropy_coef))
}

/// `mean((V(s) − R)²)`.
pub fn value_loss<'t>(tape: &'t Tape, pv: &ParamVars<'t>, net: &DeepSet, obs: &ObsBatch, returns: &[f64]) -> Var<'t> {
    net.forward(tape, pv, obs, None).sub(tape.constant(Matrix::column(returns))).square().mean()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    /// Policy loss of the first minibatch, before any parameter moved.
    pub first_policy_loss: f64,
    pub mean_policy_loss: f64,
    pub mean_value_loss: f64,
    pub minibatches: usize,
    /// Samples skipped for an overflowing probability ratio.
    pub ratio_skips: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct CostValue {
    vc: NetworkParams,
    opt: AdamState,
    lambda: f64,
}

/// Flattened rollout with advantages and returns.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub records: Vec<&'a RolloutRecord>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub cost_advantages: Vec<f64>,
    pub cost_returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoAgent {
    pub cfg: AgentConfig,
    pub spec: ObsSpec,
    pub actor_net: DeepSet,
    pub v_net: DeepSet,
    pub actor: NetworkParams,
    pub v: NetworkParams,
    actor_opt: AdamState,
    v_opt: AdamState,
    cost: Option<CostValue>,
    pub updates: u64,
}

impl PpoAgent {
    pub fn new(spec: ObsSpec, d: usize, cfg: AgentConfig, lagrangian: bool, rng: &mut Rng) -> Self {
        let actor_net = actor_net(&spec, d, &cfg);
        let v_net = v_net(&spec, &cfg);
        let actor = actor_net.init(0.1, rng);
        let v = v_net.init(1.0, rng);
        let cost = lagrangian.then(|| {
            let vc = v_net.init(1.0, rng);
            CostValue { opt: AdamState::new(vc.len()), vc, lambda: cfg.lambda_init }
        });
        PpoAgent {
            actor_opt: AdamState::new(actor.len()),
            v_opt: AdamState::new(v.len()),
            cfg,
            spec,
            actor_net,
            v_net,
            actor,
            v,
            cost,
            updates: 0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.actor_net.output_dim / 2
    }

    pub fn is_lagrangian(&self) -> bool {
        self.cost.is_some()
    }

    pub fn lambda(&self) -> Option<f64> {
        self.cost.as_ref().map(|c| c.lambda)
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        if let Some(c) = self.cost.as_mut() {
            c.lambda = lambda.max(0.0);
        }
    }

    pub fn head(&self, obs: &Observation) -> GaussianHead {
        heads(&self.actor_net, &self.actor, &single(obs, &self.spec)).remove(0)
    }

    pub fn act(&self, obs: &Observation, rng: &mut Rng) -> SquashedSample {
        squashed_sample(&self.head(obs), rng)
    }

    pub fn act_mean(&self, obs: &Observation) -> Vec<f64> {
        self.head(obs).mean.iter().map(|m| m.tanh()).collect()
    }

    /// `V(s)` and, for Lagrangian agents, `V_C(s)` (else 0).
    pub fn values(&self, obs: &Observation) -> (f64, f64) {
        let b = single(obs, &self.spec);
        let v = self.v_net.eval(&self.v, &b, None).expect("value input matches its spec").get(0, 0);
        let vc = self
            .cost
            .as_ref()
            .map_or(0.0, |c| self.v_net.eval(&c.vc, &b, None).expect("value input matches its spec").get(0, 0));
        (v, vc)
    }

    /// Advantages and returns per worker stream, flattened in stream order.
    /// Time-limit endings bootstrap from the stored `V(s')`; cost advantages
    /// use the reward discount and GAE λ.
    pub fn prepare<'a>(&self, rollout: &'a RolloutBuffer) -> Prepared<'a> {
        let (gamma, lambda) = (self.cfg.gamma, self.cfg.gae_lambda);
        let mut p = Prepared {
            records: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            cost_advantages: Vec::new(),
            cost_returns: Vec::new(),
        };
        for w in 0..rollout.workers() {
            let s = rollout.stream(w);
            if s.is_empty() {
                continue;
            }
            let boot = |r: &RolloutRecord, pick: fn((f64, f64)) -> f64| r.truncated_values.map_or(0.0, |v| gamma * pick(v));
            let rewards: Vec<f64> = s.iter().map(|r| r.reward + boot(r, |v| v.0)).collect();
            let costs: Vec<f64> = s.iter().map(|r| r.cost + boot(r, |v| v.1)).collect();
            let values: Vec<f64> = s.iter().map(|r| r.value).collect();
            let cvalues: Vec<f64> = s.iter().map(|r| r.cost_value).collect();
            let dones: Vec<bool> = s.iter().map(|r| r.done).collect();
            let (last_v, last_vc) = rollout.last_values[w];
            let (a, ret) = gae(&rewards, &values, &dones, last_v, gamma, lambda);
            let (ac, retc) = gae(&costs, &cvalues, &dones, last_vc, gamma, lambda);
            p.records.extend(s.iter());
            p.advantages.extend(a);
            p.returns.extend(ret);
            p.cost_advantages.extend(ac);
            p.cost_returns.extend(retc);
        }
        if self.cfg.normalize_advantages {
            normalize(&mut p.advantages);
            if self.cost.is_some() {
                let mean = p.cost_advantages.iter().sum::<f64>() / p.cost_advantages.len().max(1) as f64;
                p.cost_advantages.iter_mut().for_each(|a| *a -= mean);
            }
        }
        p
    }

    fn batch(&self, p: &Prepared<'_>, idx: &[usize]) -> Result<(PpoBatch, Vec<f64>, Vec<f64>)> {
        let obs: Vec<&Observation> = idx.iter().map(|&i| &p.records[i].obs).collect();
        let lambda = self.lambda().unwrap_or(0.0);
        let b = PpoBatch {
            obs: ObsBatch::new(&obs, &self.spec)?,
            pre_tanh: Matrix::from_rows(&idx.iter().map(|&i| p.records[i].pre_tanh.as_slice()).collect::<Vec<_>>()),
            old_log_prob: idx.iter().map(|&i| p.records[i].log_prob).collect(),
            advantages: idx.iter().map(|&i| p.advantages[i] - lambda * p.cost_advantages[i]).collect(),
        };
        let returns = idx.iter().map(|&i| p.returns[i]).collect();
        let cost_returns = idx.iter().map(|&i| p.cost_returns[i]).collect();
        Ok((b, returns, cost_returns))
    }

    /// `rollout_epochs` passes of shuffled minibatches, then the multiplier
    /// step. The caller clears the rollout afterwards.
    pub fn update(&mut self, rollout: &RolloutBuffer, rng: &mut Rng) -> Result<PpoStats> {
        let p = self.prepare(rollout);
        let n = p.records.len();
        let mut stats = PpoStats { lambda: self.lambda().unwrap_or(0.0), ..Default::default() };
        if n == 0 {
            return Ok(stats);
        }
        let mut order: Vec<usize> = (0..n).collect();
        let (mut policy_sum, mut value_sum) = (0.0, 0.0);
        for _ in 0..self.cfg.rollout_epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                let current = heads(
                    &self.actor_net,
                    &self.actor,
                    &ObsBatch::new(&chunk.iter().map(|&i| &p.records[i].obs).collect::<Vec<_>>(), &self.spec)?,
                );
                let kept: Vec<usize> = chunk
                    .iter()
                    .zip(&current)
                    .filter(|(&i, h)| {
                        let r = &p.records[i];
                        (squashed_log_prob(h, &r.pre_tanh) - r.log_prob).abs() <= MAX_LOG_RATIO
                    })
                    .map(|(&i, _)| i)
                    .collect();
                stats.ratio_skips += chunk.len() - kept.len();
                if kept.is_empty() {
                    continue;
                }
                let (b, returns, cost_returns) = self.batch(&p, &kept)?;
                let (actor_net, v_net) = (&self.actor_net, &self.v_net);
                let (clip, beta) = (self.cfg.clip_eps, self.cfg.entropy_coef);
                let (pl, pg) = value_and_grad(&self.actor, |t, pv| ppo_policy_loss(t, pv, actor_net, &b, clip, beta))?;
                check_loss("policy loss", pl)?;
                check_grad("actor", &pg)?;
                let (vl, vg) = value_and_grad(&self.v, |t, pv| value_loss(t, pv, v_net, &b.obs, &returns))?;
                check_loss("value loss", vl)?;
                check_grad("value", &vg)?;
                let cg = match &self.cost {
                    Some(c) => {
                        let (l, g) = value_and_grad(&c.vc, |t, pv| value_loss(t, pv, v_net, &b.obs, &cost_returns))?;
                        check_loss("cost value loss", l)?;
                        check_grad("cost value", &g)?;
                        Some(g)
                    }
                    None => None,
                };
                if stats.minibatches == 0 {
                    stats.first_policy_loss = pl;
                }
                self.actor_opt.step(self.actor.values_mut(), &pg, self.cfg.actor_lr)?;
                self.v_opt.step(self.v.values_mut(), &vg, self.cfg.critic_lr)?;
                if let (Some(c), Some(g)) = (self.cost.as_mut(), cg) {
                    c.opt.step(c.vc.values_mut(), &g, self.cfg.safety_critic_lr)?;
                }
                policy_sum += pl;
                value_sum += vl;
                stats.minibatches += 1;
            }
        }
        if let Some(c) = self.cost.as_mut() {
            let rate = p.records.iter().map(|r| r.cost).sum::<f64>() / n as f64;
            c.lambda = (c.lambda + self.cfg.lambda_lr * (rate - self.cfg.cost_threshold)).max(0.0);
            stats.lambda = c.lambda;
        }
        if stats.minibatches > 0 {
            stats.mean_policy_loss = policy_sum / stats.minibatches as f64;
            stats.mean_value_loss = value_sum / stats.minibatches as f64;
        }
        self.updates += 1;
        Ok(stats)
    }

    pub fn parameter_sets(&self) -> Vec<(&'static str, &NetworkParams)> {
        let mut v = vec![("actor", &self.actor), ("value", &self.v)];
        if let Some(c) = &self.cost {
            v.push(("cost_value", &c.vc));
        }
        v
    }

    pub fn parameter_sets_mut(&mut self) -> Vec<(&'static str, &mut NetworkParams)> {
        let mut v = vec![("actor", &mut self.actor), ("value", &mut self.v)];
        if let Some(c) = &mut self.cost {
            v.push(("cost_value", &mut c.vc));
        }
        v
    }
}
