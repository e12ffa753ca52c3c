//! Pretraining, training, checkpointing and evaluation of configured runs.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use actmap::agents::{evaluate_episodes, EpisodeRecord, Learner, Method, PpoAgent, ProgressRecord, SacAgent, Trainer};
use actmap::autodiff::NetworkParams;
use actmap::env::{Environment, PartialGenerator, PathConfig, PathEnv, RobotConfig, RobotEnv, ToyNavConfig, ToyNavEnv};
use actmap::feasibility::{FeasibilityModel, PathFeasibility, RobotFeasibility, ToyFeasibility};
use actmap::feaspolicy::{pretrain, FeasibilityPolicy, LatentMap};
use actmap::rng;
use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::{Base, EnvId, RunConfig, Variant};
use crate::manifest::{now, seed_dir_name, Completion, RunManifest, SeedSummary, COMPLETION_FILE};
use crate::{HarnessError, Result};

const LEARNER_INIT: u64 = 0x4c45_4152;
const FEAS_INIT: u64 = 0x4645_4153;
const FEAS_TRAIN: u64 = 0x5052_4554;
const EVAL_STREAM: u64 = 0x4556_4550;

const STATE_FILE: &str = "state.json";
const SUMMARY_FILE: &str = "summary.json";

pub fn path_config(cfg: &RunConfig) -> PathConfig {
    PathConfig { samples: cfg.feasibility.path_samples, ..PathConfig::default() }
}

pub fn make_env(cfg: &RunConfig) -> Box<dyn Environment> {
    match cfg.run.env {
        EnvId::Robot => Box::new(RobotEnv::new(RobotConfig::default())),
        EnvId::Path => Box::new(PathEnv::new(path_config(cfg))),
        EnvId::Toy => Box::new(ToyNavEnv::new(ToyNavConfig::default())),
    }
}

pub fn feasibility_model(cfg: &RunConfig) -> Arc<dyn FeasibilityModel> {
    match cfg.run.env {
        EnvId::Robot => Arc::new(RobotFeasibility { config: RobotConfig::default() }),
        EnvId::Path => Arc::new(PathFeasibility::new(path_config(cfg))),
        EnvId::Toy => Arc::new(ToyFeasibility),
    }
}

pub fn partial_generator(cfg: &RunConfig) -> PartialGenerator {
    match cfg.run.env {
        EnvId::Robot => PartialGenerator::Robot(RobotConfig::default()),
        EnvId::Path => PartialGenerator::Path(path_config(cfg)),
        EnvId::Toy => PartialGenerator::FixedDisks(ToyNavConfig::default().disks),
    }
}

/// One row of `pretrain.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainRow {
    pub step: usize,
    pub precision: f64,
    pub coverage: Option<f64>,
    pub dropped: usize,
    pub skipped: usize,
}

/// One row of `episodes.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub step: usize,
    pub episode: usize,
    pub worker: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub length: usize,
    pub violation: u8,
    pub lambda: f64,
}

impl From<&EpisodeRecord> for EpisodeRow {
    fn from(e: &EpisodeRecord) -> Self {
        EpisodeRow {
            step: e.step,
            episode: e.episode,
            worker: e.worker,
            ret: e.ret,
            length: e.length,
            violation: e.violation as u8,
            lambda: e.lambda,
        }
    }
}

/// One row of `progress.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRow {
    pub step: usize,
    pub episodes: usize,
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

impl From<&ProgressRecord> for ProgressRow {
    fn from(p: &ProgressRecord) -> Self {
        ProgressRow {
            step: p.step,
            episodes: p.episodes,
            recent_return: p.recent_return,
            recent_violation_rate: p.recent_violation_rate,
            buffer_len: p.buffer_len,
            updates: p.updates,
            nonfinite_skips: p.nonfinite_skips,
            ratio_skips: p.ratio_skips,
            interventions: p.interventions,
            projection_failures: p.projection_failures,
            lambda: p.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointState {
    step: usize,
    lambda: Option<f64>,
}

fn io_err(e: impl std::error::Error + Send + Sync + 'static) -> actmap::Error {
    actmap::Error::Io(std::io::Error::other(e))
}

/// Train a feasibility policy for one seed, writing `pretrain.csv` and
/// `feasibility.ckpt` into `dir`.
pub fn pretrain_seed(cfg: &RunConfig, seed: u64, dir: &Path, verbose: bool) -> Result<FeasibilityPolicy> {
    fs::create_dir_all(dir)?;
    let fcfg = cfg.feasibility.to_train_config();
    let gen = partial_generator(cfg);
    let model = feasibility_model(cfg);
    let mut policy = FeasibilityPolicy::for_generator(&gen, &fcfg, &mut rng::derived(seed, FEAS_INIT));
    let mut w = csv::Writer::from_path(dir.join("pretrain.csv"))?;
    pretrain(&fcfg, &mut policy, &gen, model.as_ref(), rng::derive_seed(seed, FEAS_TRAIN), |p| {
        let row = PretrainRow {
            step: p.step,
            precision: p.report.precision,
            coverage: p.report.coverage,
            dropped: p.dropped,
            skipped: p.skipped,
        };
        if verbose {
            eprintln!("seed {seed} pretrain step {} precision {:.4} coverage {:?}", row.step, row.precision, row.coverage);
        }
        w.serialize(&row).map_err(io_err)?;
        w.flush()?;
        Ok(())
    })?;
    policy.params.save(dir.join("feasibility.ckpt"))?;
    Ok(policy)
}

/// Feasibility policy shaped for `cfg`, with parameters read from `path`.
pub fn load_feasibility(cfg: &RunConfig, path: &Path) -> Result<FeasibilityPolicy> {
    let gen = partial_generator(cfg);
    let shell = FeasibilityPolicy::for_generator(&gen, &cfg.feasibility.to_train_config(), &mut rng::seeded(0));
    let params = NetworkParams::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(shell.with_params(params)?)
}

fn feasibility_for_seed(cfg: &RunConfig, seed: u64, dir: &Path, verbose: bool) -> Result<FeasibilityPolicy> {
    if let Some(p) = &cfg.run.feasibility_checkpoint {
        return load_feasibility(cfg, p);
    }
    let own = dir.join("feasibility.ckpt");
    if own.exists() {
        return load_feasibility(cfg, &own);
    }
    pretrain_seed(cfg, seed, dir, verbose)
}

pub fn build_learner(cfg: &RunConfig, seed: u64) -> Learner {
    let env = make_env(cfg);
    let acfg = cfg.agent.to_agent_config();
    let lag = cfg.run.algorithm.variant == Variant::Lagrangian;
    let mut r = rng::derived(seed, LEARNER_INIT);
    match cfg.run.algorithm.base {
        Base::Sac => Learner::Sac(SacAgent::new(env.obs_spec(), env.action_dim(), acfg, lag, &mut r)),
        Base::Ppo => Learner::Ppo(PpoAgent::new(env.obs_spec(), env.action_dim(), acfg, lag, &mut r)),
    }
}

pub fn build_method(cfg: &RunConfig, policy: Option<FeasibilityPolicy>) -> Result<Method> {
    Ok(match cfg.run.algorithm.variant {
        Variant::Plain | Variant::Lagrangian => Method::Plain,
        Variant::ActionMapping => {
            let p = policy.ok_or_else(|| HarnessError::Config("action mapping needs a feasibility policy".into()))?;
            Method::ActionMapping(Arc::new(p) as Arc<dyn LatentMap>)
        }
        Variant::Wrapped(kind) => Method::Wrapped { wrapper: cfg.wrapper.wrapper(kind), model: feasibility_model(cfg) },
    })
}

fn save_learner(learner: &Learner, step: usize, dir: &Path) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    for (name, p) in learner.parameter_sets() {
        p.save(tmp.join(format!("{name}.ckpt")))?;
    }
    let state = CheckpointState { step, lambda: learner.lambda() };
    fs::write(tmp.join(STATE_FILE), serde_json::to_string_pretty(&state)?)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}

fn load_learner(learner: &mut Learner, dir: &Path) -> Result<CheckpointState> {
    let state: CheckpointState = serde_json::from_str(&fs::read_to_string(dir.join(STATE_FILE))?)?;
    let names: Vec<String> = learner.parameter_sets().iter().map(|(n, _)| n.to_string()).collect();
    let mut sets = Vec::new();
    for name in names {
        let path = dir.join(format!("{name}.ckpt"));
        sets.push((name, NetworkParams::load(&path).with_context(|| format!("loading {}", path.display()))?));
    }
    learner.load_parameter_sets(sets)?;
    if let Some(l) = state.lambda {
        learner.set_lambda(l);
    }
    Ok(state)
}

/// Drop rows whose `step` column exceeds `max_step`.
fn truncate_csv(path: &Path, max_step: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let step_col = headers.iter().position(|h| h == "step").context("csv without a step column")?;
    let mut keep = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let step: usize = rec[step_col].parse().context("bad step value")?;
        if step <= max_step {
            keep.push(rec);
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&headers)?;
    for rec in keep {
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path, append: bool) -> Result<csv::Writer<File>> {
    let file = if append { OpenOptions::new().append(true).open(path)? } else { File::create(path)? };
    Ok(csv::WriterBuilder::new().has_headers(!append).from_writer(file))
}

/// Pretrain (when needed) and train one seed inside `dir`. With `resume`
/// the latest checkpoint is loaded and logging continues from its step.
pub fn train_seed(cfg: &RunConfig, seed: u64, dir: &Path, resume: bool, verbose: bool) -> Result<SeedSummary> {
    fs::create_dir_all(dir)?;
    let policy = match cfg.run.algorithm.variant {
        Variant::ActionMapping => Some(feasibility_for_seed(cfg, seed, dir, verbose)?),
        _ => None,
    };
    let mut learner = build_learner(cfg, seed);
    let latest = dir.join("checkpoints").join("latest");
    let episodes_path = dir.join("episodes.csv");
    let progress_path = dir.join("progress.csv");
    let mut start = 0;
    if resume && latest.join(STATE_FILE).exists() {
        start = load_learner(&mut learner, &latest)?.step;
        truncate_csv(&episodes_path, start)?;
        truncate_csv(&progress_path, start)?;
    }
    let append = start > 0 && episodes_path.exists() && progress_path.exists();
    let mut episodes = csv_writer(&episodes_path, append)?;
    let mut progress = csv_writer(&progress_path, append)?;
    let method = build_method(cfg, policy)?;
    let env_cfg = cfg.clone();
    let make = move || make_env(&env_cfg);
    let mut trainer = Trainer::new(learner, method, &make, cfg.agent.to_agent_config(), seed)?;
    trainer.resume_at(start);
    let total = cfg.run.total_steps;
    let every = cfg.run.checkpoint_every;
    let mut summary = None;
    while trainer.steps() < total {
        let next = if every == 0 { total } else { ((trainer.steps() / every + 1) * every).min(total) };
        let s = trainer.run(
            next,
            cfg.run.progress_every,
            |e| episodes.serialize(EpisodeRow::from(e)).map_err(io_err),
            |p| {
                if verbose {
                    eprintln!(
                        "seed {seed} step {} return {:.3} violation {:.3} updates {}",
                        p.step, p.recent_return, p.recent_violation_rate, p.updates
                    );
                }
                progress.serialize(ProgressRow::from(p)).map_err(io_err)
            },
        )?;
        episodes.flush()?;
        progress.flush()?;
        if next < total {
            save_learner(&trainer.learner, trainer.steps(), &latest)?;
        }
        summary = Some(s);
    }
    save_learner(&trainer.learner, trainer.steps(), &dir.join("final"))?;
    let s = summary.unwrap_or_default();
    let out = SeedSummary {
        seed,
        steps: trainer.steps(),
        episodes: s.episodes,
        updates: trainer.learner.updates(),
        nonfinite_skips: s.nonfinite_skips,
        ratio_skips: s.ratio_skips,
        interventions: s.interventions,
        projection_failures: s.projection_failures,
        lambda: s.lambda,
    };
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&out)?)?;
    Ok(out)
}

/// Fresh run: write the manifest, train every seed, record completion.
pub fn run(cfg: &RunConfig, dir: &Path, verbose: bool) -> Result<Completion> {
    cfg.validate()?;
    RunManifest::new(cfg.clone()).write_new(dir)?;
    finish(cfg, dir, false, verbose)
}

/// Continue a run directory: finished seeds are skipped, others restart
/// from their latest checkpoint.
pub fn resume(dir: &Path, verbose: bool) -> Result<Completion> {
    let m = RunManifest::read(dir)?;
    finish(&m.config, dir, true, verbose)
}

fn finish(cfg: &RunConfig, dir: &Path, resume: bool, verbose: bool) -> Result<Completion> {
    let mut seeds = Vec::new();
    for &seed in &cfg.run.seeds {
        let sd = dir.join(seed_dir_name(seed));
        let done = sd.join(SUMMARY_FILE);
        if resume && done.exists() {
            seeds.push(serde_json::from_str(&fs::read_to_string(&done)?)?);
            continue;
        }
        seeds.push(train_seed(cfg, seed, &sd, resume, verbose)?);
    }
    let c = Completion { finished: now(), seeds };
    fs::write(dir.join(COMPLETION_FILE), serde_json::to_string_pretty(&c)?)?;
    Ok(c)
}

/// Pretraining only: a run directory with a manifest and one feasibility
/// checkpoint per seed.
pub fn pretrain_run(cfg: &RunConfig, dir: &Path, verbose: bool) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    RunManifest::new(cfg.clone()).write_new(dir)?;
    let mut out = Vec::new();
    for &seed in &cfg.run.seeds {
        let sd = dir.join(seed_dir_name(seed));
        pretrain_seed(cfg, seed, &sd, verbose)?;
        out.push(sd.join("feasibility.ckpt"));
    }
    Ok(out)
}

/// Learner and method of a trained seed, from its final checkpoint or,
/// failing that, the latest one.
pub fn load_trained(cfg: &RunConfig, seed: u64, seed_dir: &Path) -> Result<(Learner, Method)> {
    let mut learner = build_learner(cfg, seed);
    let ckpt = [seed_dir.join("final"), seed_dir.join("checkpoints").join("latest")]
        .into_iter()
        .find(|d| d.join(STATE_FILE).exists())
        .ok_or_else(|| HarnessError::Runtime(anyhow::anyhow!("{} has no checkpoint", seed_dir.display())))?;
    load_learner(&mut learner, &ckpt)?;
    let policy = match cfg.run.algorithm.variant {
        Variant::ActionMapping => Some(match &cfg.run.feasibility_checkpoint {
            Some(p) => load_feasibility(cfg, p)?,
            None => load_feasibility(cfg, &seed_dir.join("feasibility.ckpt"))?,
        }),
        _ => None,
    };
    Ok((learner, build_method(cfg, policy)?))
}

/// Roll out trained policies without learning; writes `eval.csv` per seed.
pub fn evaluate(dir: &Path, episodes: usize, deterministic: bool) -> Result<Vec<(u64, Vec<EpisodeRecord>)>> {
    let m = RunManifest::read(dir)?;
    let mut out = Vec::new();
    for &seed in &m.seeds {
        let sd = dir.join(seed_dir_name(seed));
        let (learner, method) = load_trained(&m.config, seed, &sd)?;
        let mut env = make_env(&m.config);
        let eps = evaluate_episodes(&learner, &method, env.as_mut(), episodes, deterministic, rng::derive_seed(seed, EVAL_STREAM));
        let mut w = csv::Writer::from_path(sd.join("eval.csv"))?;
        for e in &eps {
            w.serialize(EpisodeRow::from(e))?;
        }
        w.flush()?;
        out.push((seed, eps));
    }
    Ok(out)
}
