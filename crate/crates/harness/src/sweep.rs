//! Sensitivity of the path feasibility model to the number of points `S`
//! checked along each spline.

use std::time::Instant;

use actmap::env::{PartialGenerator, PartialState, PathConfig};
use actmap::feasibility::{FeasibilityModel, PathFeasibility};
use actmap::feaspolicy::{evaluate, pretrain, FeasTrainConfig, FeasibilityPolicy};
use actmap::rng;
use serde::{Deserialize, Serialize};

use crate::Result;

pub const DEFAULT_S: [usize; 6] = [4, 8, 16, 32, 64, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTraining {
    pub steps: usize,
    pub seconds: f64,
    /// Precision of the trained policy under the finest model in the sweep.
    pub precision_at_finest: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub s_values: Vec<usize>,
    pub pairs: usize,
    /// `agreement[i][j]`: fraction of pairs where `S_i` and `S_j` give the
    /// same feasibility decision.
    pub agreement: Vec<Vec<f64>>,
    pub feasible_fraction: Vec<f64>,
    /// Wall time to evaluate all pairs once.
    pub eval_seconds: Vec<f64>,
    pub training: Vec<Option<SweepTraining>>,
}

/// Random `(partial state, action)` pairs for the path environment.
pub fn random_pairs(cfg: &PathConfig, pairs: usize, seed: u64) -> Vec<(PartialState, Vec<f64>)> {
    let mut r = rng::seeded(seed);
    (0..pairs)
        .map(|i| {
            let s = PartialState::Path(cfg.generate_partial(rng::derive_seed(seed, i as u64)));
            let a = (0..5).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
            (s, a)
        })
        .collect()
}

/// Agreement of the feasibility decisions across `s_values`, with optional
/// short pretraining runs per `S`.
pub fn s_sweep(base: &PathConfig, s_values: &[usize], pairs: usize, seed: u64, train: Option<&FeasTrainConfig>) -> Result<SweepReport> {
    let data = random_pairs(base, pairs, seed);
    let models: Vec<PathFeasibility> = s_values.iter().map(|&s| PathFeasibility::new(base.clone()).with_samples(s)).collect();
    let mut decisions = Vec::new();
    let mut eval_seconds = Vec::new();
    for m in &models {
        let t = Instant::now();
        decisions.push(data.iter().map(|(s, a)| m.feasible(s, a)).collect::<Vec<bool>>());
        eval_seconds.push(t.elapsed().as_secs_f64());
    }
    let n = s_values.len();
    let agreement = (0..n)
        .map(|i| (0..n).map(|j| decisions[i].iter().zip(&decisions[j]).filter(|(a, b)| a == b).count() as f64 / pairs as f64).collect())
        .collect();
    let feasible_fraction = decisions.iter().map(|d| d.iter().filter(|&&f| f).count() as f64 / pairs as f64).collect();
    let mut training = vec![None; n];
    if let Some(tcfg) = train {
        let finest = models.iter().max_by_key(|m| m.config.samples).expect("non-empty sweep");
        for (i, m) in models.iter().enumerate() {
            let gen = PartialGenerator::Path(m.config.clone());
            let mut policy = FeasibilityPolicy::for_generator(&gen, tcfg, &mut rng::seeded(seed));
            let t = Instant::now();
            pretrain(tcfg, &mut policy, &gen, m, seed, |_| Ok(()))?;
            let seconds = t.elapsed().as_secs_f64();
            let states = actmap::feaspolicy::eval_states(&gen, tcfg.eval_states, rng::derive_seed(seed, 1));
            let report = evaluate(&policy, &states, tcfg.eval_samples, finest, seed)?;
            training[i] = Some(SweepTraining { steps: tcfg.steps, seconds, precision_at_finest: report.precision });
        }
    }
    Ok(SweepReport { s_values: s_values.to_vec(), pairs, agreement, feasible_fraction, eval_seconds, training })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_matrix_is_symmetric_with_unit_diagonal() {
        let r = s_sweep(&PathConfig::default(), &[4, 16, 64], 300, 1, None).unwrap();
        for i in 0..3 {
            assert_eq!(r.agreement[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(r.agreement[i][j], r.agreement[j][i]);
            }
        }
    }
}
