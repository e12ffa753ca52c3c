//! Interaction loop: decisions, environment workers, buffers and update
//! schedules.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{
    project, resample, squashed_from_noise, AgentConfig, GaussianHead, PpoAgent, ReplayBuffer, RolloutBuffer,
    RolloutRecord, SacAgent, SacBatch, SquashedSample, Transition, Wrapper,
};
use crate::autodiff::NetworkParams;
use crate::env::{Environment, Observation};
use crate::feasibility::FeasibilityModel;
use crate::feaspolicy::LatentMap;
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    Sac(SacAgent),
    Ppo(PpoAgent),
}

impl Learner {
    pub fn head(&self, obs: &Observation) -> GaussianHead {
        match self {
            Learner::Sac(a) => a.head(obs),
            Learner::Ppo(a) => a.head(obs),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Learner::Sac(a) => a.latent_dim(),
            Learner::Ppo(a) => a.latent_dim(),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Learner::Sac(a) => a.lambda(),
            Learner::Ppo(a) => a.lambda(),
        }
    }

    pub fn updates(&self) -> u64 {
        match self {
            Learner::Sac(a) => a.updates,
            Learner::Ppo(a) => a.updates,
        }
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        match self {
            Learner::Sac(a) => a.set_lambda(lambda),
            Learner::Ppo(a) => a.set_lambda(lambda),
        }
    }

    /// Named parameter sets, the unit of checkpointing.
    pub fn parameter_sets(&self) -> Vec<(&'static str, &NetworkParams)> {
        match self {
            Learner::Sac(a) => a.parameter_sets(),
            Learner::Ppo(a) => a.parameter_sets(),
        }
    }

    /// Replace parameter sets by name. Every set must exist and keep its shape.
    pub fn load_parameter_sets(&mut self, sets: Vec<(String, NetworkParams)>) -> Result<()> {
        let mut slots = match self {
            Learner::Sac(a) => a.parameter_sets_mut(),
            Learner::Ppo(a) => a.parameter_sets_mut(),
        };
        for (name, params) in sets {
            let slot = slots
                .iter_mut()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("learner has no parameter set {name}")))?;
            if slot.1.layers() != params.layers() {
                return Err(Error::Checkpoint(format!("parameter set {name} has a different shape")));
            }
            *slot.1 = params;
        }
        Ok(())
    }
}

/// How a latent becomes an action.
#[derive(Clone)]
pub enum Method {
    /// The latent is the action.
    Plain,
    /// A feasibility policy maps the latent.
    ActionMapping(Arc<dyn LatentMap>),
    /// The latent is the action, repaired by a wrapper when infeasible.
    Wrapped { wrapper: Wrapper, model: Arc<dyn FeasibilityModel> },
}

impl std::fmt::Debug for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Plain => write!(f, "Plain"),
            Method::ActionMapping(_) => write!(f, "ActionMapping"),
            Method::Wrapped { wrapper, .. } => write!(f, "Wrapped({wrapper:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecisionStats {
    /// The wrapper changed the proposal.
    pub intervened: bool,
    pub draws: usize,
    pub projection_iters: usize,
    pub projection_failed: bool,
}

/// One decision: the latent that is stored and the action that is executed.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub sample: SquashedSample,
    pub action: Vec<f64>,
    pub stats: DecisionStats,
}

impl Method {
    /// Sample a latent for `obs` and turn it into an action for `env`'s
    /// current state. With `deterministic` the latent is `tanh(μ)`.
    pub fn decide(
        &self,
        learner: &Learner,
        env: &dyn Environment,
        obs: &Observation,
        deterministic: bool,
        rng: &mut Rng,
    ) -> Decision {
        let head = learner.head(obs);
        let sample = if deterministic {
            squashed_from_noise(&head, &vec![0.0; head.dim()])
        } else {
            super::squashed_sample(&head, rng)
        };
        let mut stats = DecisionStats { draws: 1, ..Default::default() };
        match self {
            Method::Plain => Decision { action: sample.z.clone(), sample, stats },
            Method::ActionMapping(map) => Decision { action: map.map(&env.partial(), &sample.z), sample, stats },
            Method::Wrapped { wrapper, model } => {
                let s = env.partial();
                if model.feasible(&s, &sample.z) {
                    return Decision { action: sample.z.clone(), sample, stats };
                }
                stats.intervened = true;
                match wrapper {
                    Wrapper::Replacement => {
                        let action = env.null_action().expect("replacement needs an environment with a null action");
                        Decision { action, sample, stats }
                    }
                    Wrapper::Resampling { budget } => {
                        let (sample, action, draws) =
                            resample(&head, sample, *budget, model.as_ref(), &s, |z| z.to_vec(), rng);
                        stats.draws = draws;
                        Decision { action, sample, stats }
                    }
                    Wrapper::Projection(cfg) => {
                        let r = project(model.as_ref(), &s, &sample.z, cfg);
                        stats.projection_iters = r.iterations;
                        stats.projection_failed = !r.converged;
                        Decision { action: r.action, sample, stats }
                    }
                }
            }
        }
    }
}

/// One finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Interaction steps taken by the run when the episode ended.
    pub step: usize,
    pub episode: usize,
    pub worker: usize,
    pub ret: f64,
    pub length: usize,
    /// The episode ended in a constraint violation.
    pub violation: bool,
    pub lambda: f64,
}

/// Periodic training health snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressRecord {
    pub step: usize,
    pub episodes: usize,
    /// Mean return over the last 100 episodes (NaN before the first).
    pub recent_return: f64,
    pub recent_violation_rate: f64,
    pub buffer_len: usize,
    pub updates: u64,
    pub nonfinite_skips: usize,
    pub ratio_skips: usize,
    pub interventions: usize,
    pub projection_failures: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainSummary {
    pub steps: usize,
    pub episodes: usize,
    pub updates: u64,
    pub nonfinite_skips: usize,
    pub ratio_skips: usize,
    pub interventions: usize,
    pub projection_failures: usize,
    pub lambda: f64,
}

const ENV_STREAM: u64 = 0x454e_5653;
const ACT_STREAM: u64 = 0x4143_5453;
const LEARN_STREAM: u64 = 0x4c52_4e53;
const RECENT: usize = 100;

struct Worker {
    env: Box<dyn Environment>,
    obs: Observation,
    episodes: u64,
    ret: f64,
    len: usize,
}

/// Runs one learner against `cfg.workers` environment copies in lockstep.
pub struct Trainer {
    pub learner: Learner,
    pub method: Method,
    pub cfg: AgentConfig,
    seed: u64,
    workers: Vec<Worker>,
    next_worker: usize,
    act_rng: Rng,
    learn_rng: Rng,
    replay: ReplayBuffer,
    rollout: RolloutBuffer,
    steps: usize,
    summary: TrainSummary,
    recent: VecDeque<(f64, bool)>,
}

impl Trainer {
    pub fn new(learner: Learner, method: Method, make_env: &dyn Fn() -> Box<dyn Environment>, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let workers = (0..cfg.workers)
            .map(|w| {
                let mut env = make_env();
                let obs = env.reset(episode_seed(seed, w, 0));
                Worker { env, obs, episodes: 0, ret: 0.0, len: 0 }
            })
            .collect::<Vec<_>>();
        if workers[0].env.action_dim() != learner.latent_dim() {
            return Err(Error::config("learner latent dimension differs from the environment's action dimension"));
        }
        if let Method::Wrapped { wrapper: Wrapper::Replacement, .. } = &method {
            if workers[0].env.null_action().is_none() {
                return Err(Error::config(format!("replacement needs a known safe action; {} has none", workers[0].env.name())));
            }
        }
        Ok(Trainer {
            replay: ReplayBuffer::new(cfg.replay_capacity),
            rollout: RolloutBuffer::new(cfg.rollout_size, cfg.workers),
            act_rng: rng::derived(seed, ACT_STREAM),
            learn_rng: rng::derived(seed, LEARN_STREAM),
            learner,
            method,
            cfg,
            seed,
            workers,
            next_worker: 0,
            steps: 0,
            summary: TrainSummary::default(),
            recent: VecDeque::new(),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Continue a checkpointed run: count `steps` as already taken. Buffers
    /// and optimizer moments start empty.
    pub fn resume_at(&mut self, steps: usize) {
        self.steps = steps;
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn rollout(&self) -> &RolloutBuffer {
        &self.rollout
    }

    fn progress(&self) -> ProgressRecord {
        let n = self.recent.len();
        let (ret, viol) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let r = self.recent.iter().map(|e| e.0).sum::<f64>() / n as f64;
            let v = self.recent.iter().filter(|e| e.1).count() as f64 / n as f64;
            (r, v)
        };
        ProgressRecord {
            step: self.steps,
            episodes: self.summary.episodes,
            recent_return: ret,
            recent_violation_rate: viol,
            buffer_len: match self.learner {
                Learner::Sac(_) => self.replay.len(),
                Learner::Ppo(_) => self.rollout.len(),
            },
            updates: self.learner.updates(),
            nonfinite_skips: self.summary.nonfinite_skips,
            ratio_skips: self.summary.ratio_skips,
            interventions: self.summary.interventions,
            projection_failures: self.summary.projection_failures,
            lambda: self.learner.lambda().unwrap_or(0.0),
        }
    }

    /// Interact until `total_steps` transitions have been collected. Workers
    /// take turns, so splitting a run into several calls changes nothing.
    /// `on_progress` fires every `progress_every` steps (0 disables it).
    pub fn run(
        &mut self,
        total_steps: usize,
        progress_every: usize,
        mut on_episode: impl FnMut(&EpisodeRecord) -> Result<()>,
        mut on_progress: impl FnMut(&ProgressRecord) -> Result<()>,
    ) -> Result<TrainSummary> {
        while self.steps < total_steps {
            let w = self.next_worker;
            self.next_worker = (w + 1) % self.workers.len();
            if let Some(ep) = self.step_worker(w)? {
                on_episode(&ep)?;
            }
            self.steps += 1;
            self.train_if_due()?;
            if progress_every > 0 && self.steps % progress_every == 0 {
                on_progress(&self.progress())?;
            }
        }
        self.summary.steps = self.steps;
        self.summary.updates = self.learner.updates();
        self.summary.lambda = self.learner.lambda().unwrap_or(0.0);
        Ok(self.summary)
    }

    fn step_worker(&mut self, w: usize) -> Result<Option<EpisodeRecord>> {
        let worker = &mut self.workers[w];
        let d = self.method.decide(&self.learner, worker.env.as_ref(), &worker.obs, false, &mut self.act_rng);
        if d.stats.intervened {
            self.summary.interventions += 1;
        }
        if d.stats.projection_failed {
            self.summary.projection_failures += 1;
        }
        let r = worker.env.step(&d.action);
        let cost = if r.violation.is_some() { 1.0 } else { 0.0 };
        let terminal = r.violation.is_some() || (r.done && !r.timeout);
        let next = r.observation.clone();
        match &self.learner {
            Learner::Sac(_) => self.replay.push(Transition {
                obs: std::mem::replace(&mut worker.obs, next.clone()),
                latent: d.sample.z,
                reward: r.reward,
                cost,
                next_obs: next,
                terminal,
            }),
            Learner::Ppo(agent) => {
                let (value, cost_value) = agent.values(&worker.obs);
                let truncated_values = (r.done && !terminal).then(|| agent.values(&next));
                self.rollout.push(
                    w,
                    RolloutRecord {
                        obs: std::mem::replace(&mut worker.obs, next),
                        pre_tanh: d.sample.pre_tanh,
                        latent: d.sample.z,
                        log_prob: d.sample.log_prob,
                        value,
                        cost_value,
                        reward: r.reward,
                        cost,
                        done: r.done,
                        truncated_values,
                    },
                );
            }
        }
        worker.ret += r.reward;
        worker.len += 1;
        if !r.done {
            return Ok(None);
        }
        let ep = EpisodeRecord {
            step: self.steps + 1,
            episode: self.summary.episodes,
            worker: w,
            ret: worker.ret,
            length: worker.len,
            violation: r.violation.is_some(),
            lambda: self.learner.lambda().unwrap_or(0.0),
        };
        worker.episodes += 1;
        worker.obs = worker.env.reset(episode_seed(self.seed, w, worker.episodes));
        worker.ret = 0.0;
        worker.len = 0;
        self.summary.episodes += 1;
        self.recent.push_back((ep.ret, ep.violation));
        if self.recent.len() > RECENT {
            self.recent.pop_front();
        }
        Ok(Some(ep))
    }

    fn train_if_due(&mut self) -> Result<()> {
        match &mut self.learner {
            Learner::Sac(agent) => {
                if self.steps % self.cfg.train_every != 0 || self.replay.len() < self.cfg.batch_size {
                    return Ok(());
                }
                let update_actor = self.steps >= self.cfg.policy_delay;
                for _ in 0..self.cfg.gradient_steps {
                    let items = self.replay.sample(self.cfg.batch_size, &mut self.learn_rng);
                    let batch = SacBatch::new(&items, &agent.spec)?;
                    match agent.update(&batch, update_actor, &mut self.learn_rng) {
                        Ok(_) => {}
                        Err(Error::NonFiniteLoss(_)) | Err(Error::NonFiniteGradient { .. }) => {
                            self.summary.nonfinite_skips += 1
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Learner::Ppo(agent) => {
                if !self.rollout.is_full() {
                    return Ok(());
                }
                for (w, worker) in self.workers.iter().enumerate() {
                    self.rollout.last_values[w] = agent.values(&worker.obs);
                }
                match agent.update(&self.rollout, &mut self.learn_rng) {
                    Ok(s) => self.summary.ratio_skips += s.ratio_skips,
                    Err(Error::NonFiniteLoss(_)) | Err(Error::NonFiniteGradient { .. }) => {
                        self.summary.nonfinite_skips += 1
                    }
                    Err(e) => return Err(e),
                }
                self.rollout.clear();
            }
        }
        Ok(())
    }
}

fn episode_seed(seed: u64, worker: usize, episode: u64) -> u64 {
    rng::derive_seed(rng::derive_seed(seed, ENV_STREAM), ((worker as u64) << 32) | episode)
}

/// Roll out `episodes` episodes with a fixed learner, without training.
pub fn evaluate_episodes(
    learner: &Learner,
    method: &Method,
    env: &mut dyn Environment,
    episodes: usize,
    deterministic: bool,
    seed: u64,
) -> Vec<EpisodeRecord> {
    let mut r = rng::derived(seed, ACT_STREAM);
    let mut out = Vec::with_capacity(episodes);
    let mut steps = 0;
    for e in 0..episodes {
        let mut obs = env.reset(episode_seed(seed, 0, e as u64));
        let (mut ret, mut len) = (0.0, 0);
        loop {
            let d = method.decide(learner, env, &obs, deterministic, &mut r);
            let s = env.step(&d.action);
            ret += s.reward;
            len += 1;
            steps += 1;
            obs = s.observation;
            if s.done {
                out.push(EpisodeRecord {
                    step: steps,
                    episode: e,
                    worker: 0,
                    ret,
                    length: len,
                    violation: s.violation.is_some(),
                    lambda: learner.lambda().unwrap_or(0.0),
                });
                break;
            }
        }
    }
    out
}
