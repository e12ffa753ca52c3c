//! Baselines that repair infeasible proposals instead of avoiding them.

use super::{squashed_sample, GaussianHead, SquashedSample};
use crate::env::PartialState;
use crate::feasibility::FeasibilityModel;
use crate::rng::Rng;

/// Gradient-descent projection onto `G = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Step length in normalized action units.
    pub step: f64,
    pub max_iters: usize,
    /// Bisection stops when the bracket is shorter than this.
    pub tolerance: f64,
    /// Central-difference step for `∇G`.
    pub fd_step: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig { step: 0.05, max_iters: 50, tolerance: 1e-4, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Wrapper {
    /// Substitute the environment's null action.
    Replacement,
    /// Redraw from the policy; after `budget` draws apply the last one.
    Resampling { budget: usize },
    Projection(ProjectionConfig),
}

impl Wrapper {
    pub fn name(&self) -> &'static str {
        match self {
            Wrapper::Replacement => "replacement",
            Wrapper::Resampling { .. } => "resampling",
            Wrapper::Projection(_) => "projection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub action: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration budget ran out or `∇G` vanished before
    /// reaching a feasible point; `action` is then the last iterate.
    pub converged: bool,
    pub evaluations: usize,
}

/// Normalized gradient steps on `G` from `a`. The first step that lands on
/// a feasible point is followed by bisection along that step, so the result
/// sits within `tolerance` of the boundary on the feasible side.
pub fn project(model: &dyn FeasibilityModel, s: &PartialState, a: &[f64], cfg: &ProjectionConfig) -> ProjectionResult {
    let mut evals = 1;
    let mut x = a.to_vec();
    if model.violation(s, &x) == 0.0 {
        return ProjectionResult { action: x, iterations: 0, converged: true, evaluations: evals };
    }
    let h = cfg.fd_step;
    for it in 1..=cfg.max_iters {
        let mut grad = vec![0.0; x.len()];
        for k in 0..x.len() {
            let mut p = x.clone();
            p[k] += h;
            let up = model.violation(s, &p);
            p[k] -= 2.0 * h;
            grad[k] = (up - model.violation(s, &p)) / (2.0 * h);
            evals += 2;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return ProjectionResult { action: x, iterations: it, converged: false, evaluations: evals };
        }
        let cand: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v - cfg.step * g / norm).collect();
        evals += 1;
        if model.violation(s, &cand) == 0.0 {
            let (mut lo, mut hi) = (x, cand);
            while dist(&lo, &hi) > cfg.tolerance {
                let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                evals += 1;
                if model.violation(s, &mid) == 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return ProjectionResult { action: hi, iterations: it, converged: true, evaluations: evals };
        }
        x = cand;
    }
    ProjectionResult { action: x, iterations: cfg.max_iters, converged: false, evaluations: evals }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Redraw from `head` until `to_action` of the draw is feasible, at most
/// `budget` draws including `first`. Returns the last draw, its action and
/// the number of draws.
pub fn resample(
    head: &GaussianHead,
    first: SquashedSample,
    budget: usize,
    model: &dyn FeasibilityModel,
    s: &PartialState,
    to_action: impl Fn(&[f64]) -> Vec<f64>,
    rng: &mut Rng,
) -> (SquashedSample, Vec<f64>, usize) {
    let mut sample = first;
    let mut action = to_action(&sample.z);
    let mut draws = 1;
    while draws < budget.max(1) && !model.feasible(s, &action) {
        sample = squashed_sample(head, rng);
        action = to_action(&sample.z);
        draws += 1;
    }
    (sample, action, draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{empty_state, HalfLineFeasibility};
    use crate::rng;

    #[test]
    fn half_line_projects_to_boundary() {
        let r = project(&HalfLineFeasibility, &empty_state(), &[1.5], &ProjectionConfig::default());
        assert!(r.converged);
        assert!(r.iterations <= 50);
        assert!((r.action[0] - 1.0).abs() <= 1e-3, "{:?}", r.action);
        assert_eq!(HalfLineFeasibility.violation(&empty_state(), &r.action), 0.0);
    }

    #[test]
    fn feasible_input_is_untouched() {
        let r = project(&HalfLineFeasibility, &empty_state(), &[0.3], &ProjectionConfig::default());
        assert_eq!(r.action, vec![0.3]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn out_of_reach_flags_failure() {
        let cfg = ProjectionConfig { max_iters: 3, ..Default::default() };
        let r = project(&HalfLineFeasibility, &empty_state(), &[5.0], &cfg);
        assert!(!r.converged);
        assert!((r.action[0] - 4.85).abs() < 1e-9);
    }

    #[test]
    fn resampling_stops_at_budget() {
        let head = GaussianHead::new(vec![5.0], vec![-10.0]);
        let mut r = rng::seeded(0);
        let first = squashed_sample(&head, &mut r);
        let (_, a, draws) = resample(&head, first, 7, &HalfLineFeasibility, &empty_state(), |z| vec![z[0] * 3.0], &mut r);
        assert_eq!(draws, 7);
        assert!(a[0] > 1.0);
    }
}
