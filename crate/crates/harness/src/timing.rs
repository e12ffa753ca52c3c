//! Per-decision latency of the decision methods on identical states.

use std::path::Path;
use std::time::Instant;

use actmap::agents::{Learner, Method};
use actmap::feaspolicy::{FeasibilityPolicy, LatentMap};
use actmap::rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, WrapperKind};
use crate::manifest::seed_dir_name;
use crate::run::{build_learner, feasibility_model, load_feasibility, load_trained, make_env, partial_generator};
use crate::Result;

const STATE_STREAM: u64 = 0x5449_4d45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub decisions: usize,
    pub mean_ms: f64,
    pub ratio_to_base: f64,
    pub interventions: usize,
    pub mean_projection_iters: f64,
    /// Mean over decisions that needed no repair; NaN when there were none.
    pub mean_ms_untouched: f64,
}

/// Time `decisions` stochastic decisions per method. States come from
/// environment resets with fixed seeds, so every method sees the same
/// inputs. With `run_dir` the first seed's trained networks are used;
/// otherwise freshly initialized ones, which cost the same to evaluate.
pub fn timing(cfg: &RunConfig, decisions: usize, run_dir: Option<&Path>) -> Result<Vec<TimingRow>> {
    let seed = cfg.run.seeds[0];
    let (learner, policy) = match run_dir {
        Some(dir) => {
            let sd = dir.join(seed_dir_name(seed));
            let (learner, _) = load_trained(cfg, seed, &sd)?;
            let ckpt = sd.join("feasibility.ckpt");
            let policy = if ckpt.exists() { Some(load_feasibility(cfg, &ckpt)?) } else { None };
            (learner, policy)
        }
        None => (build_learner(cfg, seed), None),
    };
    let policy = policy.unwrap_or_else(|| {
        FeasibilityPolicy::for_generator(&partial_generator(cfg), &cfg.feasibility.to_train_config(), &mut rng::seeded(seed))
    });
    let mut env = make_env(cfg);
    let model = feasibility_model(cfg);
    let mut methods: Vec<(String, Method)> = vec![
        ("base".into(), Method::Plain),
        ("action-mapping".into(), Method::ActionMapping(std::sync::Arc::new(policy) as std::sync::Arc<dyn LatentMap>)),
        ("projection".into(), Method::Wrapped { wrapper: cfg.wrapper.wrapper(WrapperKind::Projection), model: model.clone() }),
        ("resampling".into(), Method::Wrapped { wrapper: cfg.wrapper.wrapper(WrapperKind::Resampling), model: model.clone() }),
    ];
    if env.null_action().is_some() {
        methods.push(("replacement".into(), Method::Wrapped { wrapper: cfg.wrapper.wrapper(WrapperKind::Replacement), model }));
    }
    let mut rows: Vec<TimingRow> = Vec::new();
    for (name, method) in &methods {
        rows.push(time_method(name, method, &learner, env.as_mut(), decisions, seed));
    }
    let base = rows[0].mean_ms;
    for r in &mut rows {
        r.ratio_to_base = r.mean_ms / base;
    }
    Ok(rows)
}

fn time_method(
    name: &str,
    method: &Method,
    learner: &Learner,
    env: &mut dyn actmap::env::Environment,
    decisions: usize,
    seed: u64,
) -> TimingRow {
    let mut r = rng::derived(seed, STATE_STREAM ^ 1);
    let (mut total, mut untouched, mut n_untouched) = (0.0, 0.0, 0usize);
    let (mut interventions, mut iters) = (0, 0);
    for i in 0..decisions {
        let obs = env.reset(rng::derive_seed(rng::derive_seed(seed, STATE_STREAM), i as u64));
        let t = Instant::now();
        let d = method.decide(learner, env, &obs, false, &mut r);
        let ms = t.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(&d);
        total += ms;
        interventions += d.stats.intervened as usize;
        iters += d.stats.projection_iters;
        if !d.stats.intervened {
            untouched += ms;
            n_untouched += 1;
        }
    }
    TimingRow {
        method: name.into(),
        decisions,
        mean_ms: total / decisions as f64,
        ratio_to_base: f64::NAN,
        interventions,
        mean_projection_iters: iters as f64 / decisions as f64,
        mean_ms_untouched: if n_untouched == 0 { f64::NAN } else { untouched / n_untouched as f64 },
    }
}
