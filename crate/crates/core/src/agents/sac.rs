//! Soft actor-critic with twin critics, optionally with a safety critic and
//! a Lagrange multiplier.

use super::{
    check_grad, check_loss, column_values, heads, noise, polyak, q_net, single, split_head, squashed_from_noise, squashed_sample,
    taped_rsample, actor_net, AgentConfig, GaussianHead, SquashedSample, Transition,
};
use crate::autodiff::{value_and_grad, AdamState, Matrix, NetworkParams, ParamVars, Tape, Var};
use crate::env::{ObsSpec, Observation};
use crate::nets::{DeepSet, ObsBatch};
use crate::rng::Rng;
use crate::Result;

/// A sampled minibatch in network-ready form.
#[derive(Debug, Clone)]
pub struct SacBatch {
    pub obs: ObsBatch,
    pub next_obs: ObsBatch,
    pub latents: Matrix,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl SacBatch {
    pub fn new(items: &[&Transition], spec: &ObsSpec) -> Result<Self> {
        let obs: Vec<&Observation> = items.iter().map(|t| &t.obs).collect();
        let next: Vec<&Observation> = items.iter().map(|t| &t.next_obs).collect();
        let latents: Vec<&[f64]> = items.iter().map(|t| t.latent.as_slice()).collect();
        Ok(SacBatch {
            obs: ObsBatch::new(&obs, spec)?,
            next_obs: ObsBatch::new(&next, spec)?,
            latents: Matrix::from_rows(&latents),
            rewards: items.iter().map(|t| t.reward).collect(),
            costs: items.iter().map(|t| t.cost).collect(),
            terminal: items.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `mean((Q(s, z) − y)²)`.
pub fn critic_loss<'t>(
    tape: &'t Tape,
    pv: &ParamVars<'t>,
    net: &DeepSet,
    obs: &ObsBatch,
    latents: &Matrix,
    targets: &[f64],
) -> Var<'t> {
    let q = net.forward(tape, pv, obs, Some(tape.constant(latents.clone())));
    q.sub(tape.constant(Matrix::column(targets))).square().mean()
}

/// Everything the actor loss reads besides the actor parameters.
pub struct ActorLossInputs<'a> {
    pub actor_net: &'a DeepSet,
    pub q_net: &'a DeepSet,
    pub q: [&'a NetworkParams; 2],
    pub obs: &'a ObsBatch,
    /// Reparameterization noise, one row per observation.
    pub eps: &'a Matrix,
    pub alpha: f64,
    /// Safety critic, multiplier and threshold.
    pub cost: Option<(&'a NetworkParams, f64, f64)>,
}

/// `mean(α log π − min(Q₁, Q₂) + λ (Q_C − δ_C))` at reparameterized latents.
pub fn actor_loss<'t>(tape: &'t Tape, pv: &ParamVars<'t>, inp: &ActorLossInputs<'_>) -> Var<'t> {
    let out = inp.actor_net.forward(tape, pv, inp.obs, None);
    let (mean, log_std) = split_head(out);
    let (z, log_prob) = taped_rsample(mean, log_std, inp.eps);
    let q1 = inp.q_net.forward(tape, &tape.frozen_params(inp.q[0]), inp.obs, Some(z));
    let q2 = inp.q_net.forward(tape, &tape.frozen_params(inp.q[1]), inp.obs, Some(z));
    let mut loss = log_prob.scale(inp.alpha).sub(q1.min(q2));
    if let Some((qc, lambda, delta)) = inp.cost {
        let c = inp.q_net.forward(tape, &tape.frozen_params(qc), inp.obs, Some(z));
        loss = loss.add(c.add_scalar(-delta).scale(lambda));
    }
    loss.mean()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SacStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub cost_critic_loss: Option<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct SafetyCritic {
    qc: NetworkParams,
    qc_target: NetworkParams,
    opt: AdamState,
    lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub cfg: AgentConfig,
    pub spec: ObsSpec,
    pub actor_net: DeepSet,
    pub q_net: DeepSet,
    pub actor: NetworkParams,
    pub q: [NetworkParams; 2],
    pub q_target: [NetworkParams; 2],
    actor_opt: AdamState,
    q_opt: [AdamState; 2],
    safety: Option<SafetyCritic>,
    pub updates: u64,
}

impl SacAgent {
    pub fn new(spec: ObsSpec, d: usize, cfg: AgentConfig, lagrangian: bool, rng: &mut Rng) -> Self {
        let actor_net = actor_net(&spec, d, &cfg);
        let q_net = q_net(&spec, d, &cfg);
        let actor = actor_net.init(0.1, rng);
        let q = [q_net.init(1.0, rng), q_net.init(1.0, rng)];
        let q_target = q.clone();
        let safety = lagrangian.then(|| {
            let qc = q_net.init(1.0, rng);
            SafetyCritic { qc_target: qc.clone(), opt: AdamState::new(qc.len()), qc, lambda: cfg.lambda_init }
        });
        SacAgent {
            actor_opt: AdamState::new(actor.len()),
            q_opt: [AdamState::new(q[0].len()), AdamState::new(q[1].len())],
            cfg,
            spec,
            actor_net,
            q_net,
            actor,
            q,
            q_target,
            safety,
            updates: 0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.actor_net.output_dim / 2
    }

    pub fn is_lagrangian(&self) -> bool {
        self.safety.is_some()
    }

    pub fn lambda(&self) -> Option<f64> {
        self.safety.as_ref().map(|s| s.lambda)
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        if let Some(s) = self.safety.as_mut() {
            s.lambda = lambda.max(0.0);
        }
    }

    pub fn cost_critic(&self) -> Option<(&NetworkParams, &NetworkParams)> {
        self.safety.as_ref().map(|s| (&s.qc, &s.qc_target))
    }

    pub fn head(&self, obs: &Observation) -> GaussianHead {
        heads(&self.actor_net, &self.actor, &single(obs, &self.spec)).remove(0)
    }

    pub fn act(&self, obs: &Observation, rng: &mut Rng) -> SquashedSample {
        squashed_sample(&self.head(obs), rng)
    }

    /// Deterministic latent `tanh(μ)`.
    pub fn act_mean(&self, obs: &Observation) -> Vec<f64> {
        self.head(obs).mean.iter().map(|m| m.tanh()).collect()
    }

    fn eval_q(&self, params: &NetworkParams, obs: &ObsBatch, z: &Matrix) -> Vec<f64> {
        column_values(&self.q_net.eval(params, obs, Some(z)).expect("critic input matches its spec"))
    }

    /// Bellman targets for the reward critics and, if present, the safety critic.
    pub fn targets(&self, b: &SacBatch, eps_next: &Matrix) -> (Vec<f64>, Option<Vec<f64>>) {
        let n = b.len();
        let samples: Vec<SquashedSample> = heads(&self.actor_net, &self.actor, &b.next_obs)
            .iter()
            .enumerate()
            .map(|(i, h)| squashed_from_noise(h, eps_next.row(i)))
            .collect();
        let z_next = Matrix::from_rows(&samples.iter().map(|s| s.z.as_slice()).collect::<Vec<_>>());
        let q1 = self.eval_q(&self.q_target[0], &b.next_obs, &z_next);
        let q2 = self.eval_q(&self.q_target[1], &b.next_obs, &z_next);
        let (gamma, alpha) = (self.cfg.gamma, self.cfg.entropy_coef);
        let y = (0..n)
            .map(|i| {
                if b.terminal[i] {
                    b.rewards[i]
                } else {
                    b.rewards[i] + gamma * (q1[i].min(q2[i]) - alpha * samples[i].log_prob)
                }
            })
            .collect();
        let yc = self.safety.as_ref().map(|s| {
            let qc = self.eval_q(&s.qc_target, &b.next_obs, &z_next);
            (0..n)
                .map(|i| if b.terminal[i] { b.costs[i] } else { b.costs[i] + self.cfg.cost_gamma * qc[i] })
                .collect()
        });
        (y, yc)
    }

    /// One gradient step on every network. All losses and gradients are
    /// formed before any parameter moves; a non-finite value aborts the
    /// whole step and leaves the agent unchanged.
    pub fn update(&mut self, b: &SacBatch, update_actor: bool, rng: &mut Rng) -> Result<SacStats> {
        let (n, d) = (b.len(), self.latent_dim());
        let eps_next = noise(n, d, rng);
        let eps_pi = noise(n, d, rng);
        let (y, yc) = self.targets(b, &eps_next);
        let net = &self.q_net;
        let mut critic = Vec::with_capacity(2);
        for q in &self.q {
            let (l, g) = value_and_grad(q, |t, pv| critic_loss(t, pv, net, &b.obs, &b.latents, &y))?;
            check_loss("critic loss", l)?;
            check_grad("critic", &g)?;
            critic.push((l, g));
        }
        let cost = match (&self.safety, &yc) {
            (Some(s), Some(yc)) => {
                let (l, g) = value_and_grad(&s.qc, |t, pv| critic_loss(t, pv, net, &b.obs, &b.latents, yc))?;
                check_loss("safety critic loss", l)?;
                check_grad("safety critic", &g)?;
                Some((l, g))
            }
            _ => None,
        };
        let actor = if update_actor {
            let inp = ActorLossInputs {
                actor_net: &self.actor_net,
                q_net: &self.q_net,
                q: [&self.q[0], &self.q[1]],
                obs: &b.obs,
                eps: &eps_pi,
                alpha: self.cfg.entropy_coef,
                cost: self.safety.as_ref().map(|s| (&s.qc, s.lambda, self.cfg.cost_threshold)),
            };
            let (l, g) = value_and_grad(&self.actor, |t, pv| actor_loss(t, pv, &inp))?;
            check_loss("actor loss", l)?;
            check_grad("actor", &g)?;
            Some((l, g))
        } else {
            None
        };
        // Multiplier gradient uses the pre-update actor and safety critic.
        let violation_gap = match (&self.safety, update_actor) {
            (Some(s), true) => {
                let z: Vec<Vec<f64>> = heads(&self.actor_net, &self.actor, &b.obs)
                    .iter()
                    .enumerate()
                    .map(|(i, h)| squashed_from_noise(h, eps_pi.row(i)).z)
                    .collect();
                let qc = self.eval_q(&s.qc, &b.obs, &Matrix::from_rows(&z));
                Some(qc.iter().sum::<f64>() / n as f64 - self.cfg.cost_threshold)
            }
            _ => None,
        };

        for (i, (_, g)) in critic.iter().enumerate() {
            self.q_opt[i].step(self.q[i].values_mut(), g, self.cfg.critic_lr)?;
        }
        if let (Some(s), Some((_, g))) = (self.safety.as_mut(), &cost) {
            s.opt.step(s.qc.values_mut(), g, self.cfg.safety_critic_lr)?;
        }
        if let Some((_, g)) = &actor {
            self.actor_opt.step(self.actor.values_mut(), g, self.cfg.actor_lr)?;
        }
        if let (Some(s), Some(gap)) = (self.safety.as_mut(), violation_gap) {
            s.lambda = (s.lambda + self.cfg.lambda_lr * gap).max(0.0);
        }
        for i in 0..2 {
            polyak(&mut self.q_target[i], &self.q[i], self.cfg.tau);
        }
        if let Some(s) = self.safety.as_mut() {
            polyak(&mut s.qc_target, &s.qc, self.cfg.tau);
        }
        self.updates += 1;
        Ok(SacStats {
            critic_loss: 0.5 * (critic[0].0 + critic[1].0),
            actor_loss: actor.map(|a| a.0),
            cost_critic_loss: cost.map(|c| c.0),
            lambda: self.lambda().unwrap_or(0.0),
        })
    }

    /// All parameter sets, in a fixed order, for checkpoints.
    pub fn parameter_sets(&self) -> Vec<(&'static str, &NetworkParams)> {
        let mut v = vec![
            ("actor", &self.actor),
            ("q1", &self.q[0]),
            ("q2", &self.q[1]),
            ("q1_target", &self.q_target[0]),
            ("q2_target", &self.q_target[1]),
        ];
        if let Some(s) = &self.safety {
            v.push(("qc", &s.qc));
            v.push(("qc_target", &s.qc_target));
        }
        v
    }

    pub fn parameter_sets_mut(&mut self) -> Vec<(&'static str, &mut NetworkParams)> {
        let [q1, q2] = &mut self.q;
        let [t1, t2] = &mut self.q_target;
        let mut v = vec![("actor", &mut self.actor), ("q1", q1), ("q2", q2), ("q1_target", t1), ("q2_target", t2)];
        if let Some(s) = &mut self.safety {
            v.push(("qc", &mut s.qc));
            v.push(("qc_target", &mut s.qc_target));
        }
        v
    }
}
