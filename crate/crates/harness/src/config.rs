//! Run configuration: TOML sections per module, scale presets and
//! `section.key=value` overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use actmap::agents::{AgentConfig, ProjectionConfig, Wrapper};
use actmap::feaspolicy::FeasTrainConfig;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Robot,
    Path,
    Toy,
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvId::Robot => "robot",
            EnvId::Path => "path",
            EnvId::Toy => "toy",
        })
    }
}

/// Hyperparameter scale. `full` carries the published defaults; `desk`
/// shrinks networks and step counts so a run fits on a laptop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    Sac,
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrapperKind {
    Replacement,
    Resampling,
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    ActionMapping,
    Lagrangian,
    Wrapped(WrapperKind),
}

/// `sac`, `am-ppo`, `lag-sac`, `ppo+projection`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Algorithm {
    pub base: Base,
    pub variant: Variant,
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("unknown algorithm {s:?}; expected sac|ppo, am-*, lag-* or *+replacement|resampling|projection");
        let base_of = |b: &str| match b {
            "sac" => Ok(Base::Sac),
            "ppo" => Ok(Base::Ppo),
            _ => Err(bad()),
        };
        if let Some((b, w)) = s.split_once('+') {
            let kind = match w {
                "replacement" => WrapperKind::Replacement,
                "resampling" => WrapperKind::Resampling,
                "projection" => WrapperKind::Projection,
                _ => return Err(bad()),
            };
            return Ok(Algorithm { base: base_of(b)?, variant: Variant::Wrapped(kind) });
        }
        if let Some(b) = s.strip_prefix("am-") {
            return Ok(Algorithm { base: base_of(b)?, variant: Variant::ActionMapping });
        }
        if let Some(b) = s.strip_prefix("lag-") {
            return Ok(Algorithm { base: base_of(b)?, variant: Variant::Lagrangian });
        }
        Ok(Algorithm { base: base_of(s)?, variant: Variant::Plain })
    }
}

impl TryFrom<String> for Algorithm {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = match self.base {
            Base::Sac => "sac",
            Base::Ppo => "ppo",
        };
        match self.variant {
            Variant::Plain => write!(f, "{b}"),
            Variant::ActionMapping => write!(f, "am-{b}"),
            Variant::Lagrangian => write!(f, "lag-{b}"),
            Variant::Wrapped(w) => write!(
                f,
                "{b}+{}",
                match w {
                    WrapperKind::Replacement => "replacement",
                    WrapperKind::Resampling => "resampling",
                    WrapperKind::Projection => "projection",
                }
            ),
        }
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub preset: Preset,
    pub env: EnvId,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    /// Progress rows are written every this many environment steps.
    pub progress_every: usize,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
    /// Load this feasibility-policy checkpoint instead of pretraining.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub tau: f64,
    pub policy_delay: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
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
    pub cost_gamma: f64,
    pub cost_threshold: f64,
    pub safety_critic_lr: f64,
    pub lambda_lr: f64,
    pub lambda_init: f64,
}

impl From<&AgentConfig> for AgentSection {
    fn from(c: &AgentConfig) -> Self {
        AgentSection {
            gamma: c.gamma,
            actor_lr: c.actor_lr,
            critic_lr: c.critic_lr,
            entropy_coef: c.entropy_coef,
            tau: c.tau,
            policy_delay: c.policy_delay,
            batch_size: c.batch_size,
            replay_capacity: c.replay_capacity,
            train_every: c.train_every,
            gradient_steps: c.gradient_steps,
            rollout_size: c.rollout_size,
            rollout_epochs: c.rollout_epochs,
            gae_lambda: c.gae_lambda,
            clip_eps: c.clip_eps,
            normalize_advantages: c.normalize_advantages,
            workers: c.workers,
            hidden: c.hidden.clone(),
            encoder_width: c.encoder_width,
            cost_gamma: c.cost_gamma,
            cost_threshold: c.cost_threshold,
            safety_critic_lr: c.safety_critic_lr,
            lambda_lr: c.lambda_lr,
            lambda_init: c.lambda_init,
        }
    }
}

impl AgentSection {
    pub fn to_agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            entropy_coef: self.entropy_coef,
            tau: self.tau,
            policy_delay: self.policy_delay,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            train_every: self.train_every,
            gradient_steps: self.gradient_steps,
            rollout_size: self.rollout_size,
            rollout_epochs: self.rollout_epochs,
            gae_lambda: self.gae_lambda,
            clip_eps: self.clip_eps,
            normalize_advantages: self.normalize_advantages,
            workers: self.workers,
            hidden: self.hidden.clone(),
            encoder_width: self.encoder_width,
            cost_gamma: self.cost_gamma,
            cost_threshold: self.cost_threshold,
            safety_critic_lr: self.safety_critic_lr,
            lambda_lr: self.lambda_lr,
            lambda_init: self.lambda_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilitySection {
    pub samples: usize,
    pub states: usize,
    pub sigma: f64,
    pub sigma_prime_factor: f64,
    pub steps: usize,
    pub lr: f64,
    pub eval_interval: usize,
    pub eval_samples: usize,
    pub eval_states: usize,
    pub hidden: Vec<usize>,
    pub encoder_width: usize,
    pub init_scale: f64,
    pub latent_skip: f64,
    /// Points checked along a path spline (`S`).
    pub path_samples: usize,
}

impl FeasibilitySection {
    fn from_train(c: &FeasTrainConfig, path_samples: usize) -> Self {
        FeasibilitySection {
            samples: c.samples,
            states: c.states,
            sigma: c.sigma,
            sigma_prime_factor: c.sigma_prime_factor,
            steps: c.steps,
            lr: c.lr,
            eval_interval: c.eval_interval,
            eval_samples: c.eval_samples,
            eval_states: c.eval_states,
            hidden: c.hidden.clone(),
            encoder_width: c.encoder_width,
            init_scale: c.init_scale,
            latent_skip: c.latent_skip,
            path_samples,
        }
    }

    pub fn to_train_config(&self) -> FeasTrainConfig {
        FeasTrainConfig {
            samples: self.samples,
            states: self.states,
            sigma: self.sigma,
            sigma_prime_factor: self.sigma_prime_factor,
            steps: self.steps,
            lr: self.lr,
            eval_interval: self.eval_interval,
            eval_samples: self.eval_samples,
            eval_states: self.eval_states,
            hidden: self.hidden.clone(),
            encoder_width: self.encoder_width,
            init_scale: self.init_scale,
            latent_skip: self.latent_skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrapperSection {
    /// Total policy draws per decision for resampling.
    pub resampling_budget: usize,
    pub projection_step: f64,
    pub projection_max_iters: usize,
    pub projection_tolerance: f64,
    pub projection_fd_step: f64,
}

impl Default for WrapperSection {
    fn default() -> Self {
        let p = ProjectionConfig::default();
        WrapperSection {
            resampling_budget: 100,
            projection_step: p.step,
            projection_max_iters: p.max_iters,
            projection_tolerance: p.tolerance,
            projection_fd_step: p.fd_step,
        }
    }
}

impl WrapperSection {
    pub fn projection(&self) -> ProjectionConfig {
        ProjectionConfig {
            step: self.projection_step,
            max_iters: self.projection_max_iters,
            tolerance: self.projection_tolerance,
            fd_step: self.projection_fd_step,
        }
    }

    pub fn wrapper(&self, kind: WrapperKind) -> Wrapper {
        match kind {
            WrapperKind::Replacement => Wrapper::Replacement,
            WrapperKind::Resampling => Wrapper::Resampling { budget: self.resampling_budget },
            WrapperKind::Projection => Wrapper::Projection(self.projection()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub agent: AgentSection,
    pub feasibility: FeasibilitySection,
    pub wrapper: WrapperSection,
}

impl RunConfig {
    /// Defaults for a preset, environment and algorithm.
    pub fn preset(preset: Preset, env: EnvId, algorithm: Algorithm) -> Self {
        let mut agent = match algorithm.base {
            Base::Sac => AgentConfig::sac(),
            Base::Ppo => AgentConfig::ppo(),
        };
        let mut feas = FeasTrainConfig::default();
        if algorithm.base == Base::Ppo {
            feas.steps = 1_000_000;
            feas.sigma_prime_factor = 1.0;
        }
        let (total_steps, checkpoint_every) = match algorithm.base {
            Base::Sac => (25_000_000, 100_000),
            Base::Ppo => (100_000_000, 100_000),
        };
        let mut run = RunSection {
            preset,
            env,
            algorithm,
            seeds: vec![0, 1, 2],
            total_steps,
            progress_every: 1000,
            checkpoint_every,
            feasibility_checkpoint: None,
        };
        if preset == Preset::Desk {
            run.total_steps = 100_000;
            run.checkpoint_every = 10_000;
            agent.hidden = vec![64, 64];
            agent.encoder_width = 16;
            agent.actor_lr = 3e-4;
            agent.critic_lr = 1e-3;
            agent.safety_critic_lr = 1e-3;
            agent.replay_capacity = 100_000;
            agent.rollout_size = 2000;
            feas = FeasTrainConfig {
                samples: 256,
                states: if env == EnvId::Toy { 1 } else { 4 },
                lr: 1e-3,
                steps: 2000,
                eval_interval: 500,
                eval_samples: 256,
                hidden: vec![64, 64],
                encoder_width: 8,
                ..feas
            };
        }
        RunConfig {
            run,
            agent: AgentSection::from(&agent),
            feasibility: FeasibilitySection::from_train(&feas, 64),
            wrapper: WrapperSection::default(),
        }
    }

    /// Parse TOML text on top of the preset it names, then apply
    /// `section.key=value` overrides. The preset, environment and algorithm
    /// default to `desk`, `toy` and `am-sac`.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut user: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        let run = user.get("run").and_then(|v| v.as_table());
        let pick = |key: &str, default: &str| -> String {
            run.and_then(|r| r.get(key)).and_then(|v| v.as_str()).unwrap_or(default).to_string()
        };
        let preset: Preset = parse_enum(&pick("preset", "desk"), "run.preset")?;
        let env: EnvId = parse_enum(&pick("env", "toy"), "run.env")?;
        let algorithm: Algorithm = pick("algorithm", "am-sac").parse().map_err(|e| HarnessError::Config(format!("run.algorithm: {e}")))?;
        let base = toml::Table::try_from(RunConfig::preset(preset, env, algorithm)).expect("config serializes");
        let merged = merge(base, user);
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Field-level checks beyond what the types enforce.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let field = |name: &str, msg: &str| Err(HarnessError::Config(format!("{name}: {msg}")));
        let r = &self.run;
        if r.seeds.is_empty() {
            return field("run.seeds", "at least one seed is required");
        }
        if r.total_steps == 0 {
            return field("run.total_steps", "must be positive");
        }
        if r.algorithm.variant == Variant::Wrapped(WrapperKind::Replacement) && r.env == EnvId::Path {
            return field("run.algorithm", "replacement needs a known feasible action, which the path environment lacks");
        }
        if self.feasibility.path_samples < 2 {
            return field("feasibility.path_samples", "must be at least 2");
        }
        if self.wrapper.resampling_budget == 0 {
            return field("wrapper.resampling_budget", "must be at least 1");
        }
        self.agent.to_agent_config().validate().map_err(|e| HarnessError::Config(format!("agent: {e}")))?;
        self.feasibility.to_train_config().validate().map_err(|e| HarnessError::Config(format!("feasibility: {e}")))?;
        Ok(())
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str, name: &str) -> Result<T, HarnessError> {
    T::deserialize(toml::Value::String(s.to_string())).map_err(|e| HarnessError::Config(format!("{name}: {e}")))
}

/// `section.key=value`; the value is read as TOML and falls back to a string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), HarnessError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| HarnessError::Config(format!("override {spec:?} is not key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| HarnessError::Config(format!("override key {path:?} must be section.key")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let sec = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| HarnessError::Config(format!("{section} is not a section")))?;
    sec.insert(key.to_string(), value);
    Ok(())
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for s in ["sac", "ppo", "am-sac", "am-ppo", "lag-sac", "lag-ppo", "sac+replacement", "ppo+resampling", "sac+projection"] {
            assert_eq!(s.parse::<Algorithm>().unwrap().to_string(), s);
        }
        assert!("td3".parse::<Algorithm>().is_err());
        assert!("am-td3".parse::<Algorithm>().is_err());
    }

    #[test]
    fn full_preset_matches_published_defaults() {
        let c = RunConfig::preset(Preset::Full, EnvId::Robot, "am-sac".parse().unwrap());
        assert_eq!(c.run.total_steps, 25_000_000);
        assert_eq!(c.agent.actor_lr, 3e-5);
        assert_eq!(c.agent.policy_delay, 2048);
        assert_eq!(c.feasibility.steps, 500_000);
        assert_eq!(c.feasibility.sigma_prime_factor, 2.0);
        let p = RunConfig::preset(Preset::Full, EnvId::Path, "am-ppo".parse().unwrap());
        assert_eq!(p.run.total_steps, 100_000_000);
        assert_eq!(p.agent.entropy_coef, 0.005);
        assert_eq!(p.feasibility.steps, 1_000_000);
        assert_eq!(p.feasibility.sigma_prime_factor, 1.0);
    }

    #[test]
    fn file_and_overrides_layer_on_the_preset() {
        let text = "[run]\npreset = \"full\"\nenv = \"robot\"\nalgorithm = \"ppo\"\n[agent]\nbatch_size = 64\n";
        let c = RunConfig::from_toml(text, &["agent.gamma=0.5".into(), "run.seeds=[7]".into()]).unwrap();
        assert_eq!(c.agent.batch_size, 64);
        assert_eq!(c.agent.gamma, 0.5);
        assert_eq!(c.run.seeds, vec![7]);
        assert_eq!(c.agent.entropy_coef, 0.005);
        let again = RunConfig::from_toml(&c.to_toml(), &[]).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = RunConfig::from_toml("[agent]\nbatchsize = 3\n", &[]).unwrap_err();
        assert!(err.to_string().contains("batchsize"), "{err}");
    }

    #[test]
    fn replacement_rejected_on_path() {
        let err = RunConfig::from_toml("[run]\nenv = \"path\"\nalgorithm = \"sac+replacement\"\n", &[]).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
        assert!(err.to_string().contains("run.algorithm"));
        assert!(RunConfig::from_toml("[run]\nenv = \"robot\"\nalgorithm = \"sac+replacement\"\n", &[]).is_ok());
    }
}
