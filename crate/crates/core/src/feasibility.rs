//! Feasibility models: a continuous violation measure `G(s, a) ≥ 0` and the
//! Boolean test `g(s, a) ⇔ G(s, a) = 0`.
//!
//! Every model adds `Σ_k max(0, |a_k| − 1)` for actions outside the unit box,
//! so repairs that leave the box are penalised rather than silently clipped.

use rayon::prelude::*;

use crate::autodiff::Matrix;
use crate::env::{Environment, Observation, PartialState, PathConfig, RobotConfig, ToyDiskState};
use crate::geometry::{CubicBezier, Vec2};
use crate::{Error, Result};

/// Per-transition cost bounds `w_i`, keyed by cost name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostSpec {
    pub entries: Vec<(String, f64)>,
}

impl CostSpec {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        if let Some((name, _)) = entries.iter().find(|(_, w)| !w.is_finite()) {
            return Err(Error::config(format!("cost bound `{name}` is not finite")));
        }
        Ok(CostSpec { entries })
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, w)| *w).collect()
    }

    pub fn joint_cost(&self, costs: &[f64]) -> Result<f64> {
        joint_cost(costs, &self.bounds())
    }
}

/// `Σ_i max(0, C_i − w_i)`.
pub fn joint_cost(costs: &[f64], bounds: &[f64]) -> Result<f64> {
    if costs.len() != bounds.len() {
        return Err(Error::usage(format!("{} costs for {} bounds", costs.len(), bounds.len())));
    }
    Ok(costs.iter().zip(bounds).map(|(c, w)| (c - w).max(0.0)).sum())
}

/// Excess of each coordinate over the unit box.
pub fn box_violation(a: &[f64]) -> f64 {
    a.iter().map(|x| (x.abs() - 1.0).max(0.0)).sum()
}

pub trait FeasibilityModel: Sync {
    fn action_dim(&self) -> usize;

    /// `G(s, a)`.
    fn violation(&self, s: &PartialState, a: &[f64]) -> f64;

    /// `g(s, a)`.
    fn feasible(&self, s: &PartialState, a: &[f64]) -> bool {
        self.violation(s, a) == 0.0
    }

    /// `G` for every row of `actions`, in row order.
    fn violation_batch(&self, s: &PartialState, actions: &Matrix) -> Vec<f64> {
        let rows: Vec<usize> = (0..actions.rows()).collect();
        if actions.rows() >= 256 {
            rows.par_iter().map(|&i| self.violation(s, actions.row(i))).collect()
        } else {
            rows.iter().map(|&i| self.violation(s, actions.row(i))).collect()
        }
    }

    fn feasible_batch(&self, s: &PartialState, actions: &Matrix) -> Vec<bool> {
        self.violation_batch(s, actions).into_iter().map(|g| g == 0.0).collect()
    }

    /// Which disconnected component of the feasible set `a` lies in, where
    /// the model knows its components.
    fn mode_of(&self, _s: &PartialState, _a: &[f64]) -> Option<usize> {
        None
    }
}

fn wrong_state(model: &str, s: &PartialState) -> ! {
    panic!("{model} feasibility model given a {s:?} state")
}

/// One-step prediction for the arm: joint limits, frame speeds, collisions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RobotFeasibility {
    pub config: RobotConfig,
}

impl FeasibilityModel for RobotFeasibility {
    fn action_dim(&self) -> usize {
        7
    }

    fn violation(&self, s: &PartialState, a: &[f64]) -> f64 {
        let PartialState::Robot(s) = s else { wrong_state("robot", s) };
        let mut d = [0.0; 7];
        for (o, x) in d.iter_mut().zip(a) {
            *o = x.clamp(-1.0, 1.0) * self.config.max_delta;
        }
        box_violation(a) + self.config.transition_terms(&s.joints, &d, &s.obstacles).total()
    }
}

/// Checks the whole candidate spline at `S` equidistant parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFeasibility {
    pub config: PathConfig,
}

/// Cap on the per-point curvature term so cusps stay finite.
pub const CURVATURE_CAP: f64 = 1e3;

impl PathFeasibility {
    pub fn new(config: PathConfig) -> Self {
        PathFeasibility { config }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.config.samples = samples;
        self
    }

    fn spline_violation(&self, s: &crate::env::PathPartial, a: &[f64]) -> f64 {
        let cfg = &self.config;
        let curve = crate::env::decode_spline(s.position, s.heading, a, cfg.step_length);
        let ts = CubicBezier::params(cfg.samples.max(2)).expect("at least two samples");
        let mut total = 0.0;
        let mut length = 0.0;
        let mut prev: Option<Vec2> = None;
        for &t in &ts {
            let p = curve.point(t);
            if let Some(q) = prev {
                length += (p - q).norm();
            }
            prev = Some(p);
            let arena = (-p.x).max(0.0) + (p.x - 1.0).max(0.0) + (-p.y).max(0.0) + (p.y - 1.0).max(0.0);
            let depth = s.rects.iter().map(|r| (cfg.margin - r.signed_distance(&p)).max(0.0)).fold(0.0, f64::max);
            let kappa = (curve.curvature(t) - cfg.kappa_max).max(0.0).min(CURVATURE_CAP);
            total += arena + depth + kappa;
        }
        let (lo, hi) = (cfg.length_factors.0 * cfg.step_length, cfg.length_factors.1 * cfg.step_length);
        total + (lo - length).max(0.0) + (length - hi).max(0.0)
    }
}

impl FeasibilityModel for PathFeasibility {
    fn action_dim(&self) -> usize {
        5
    }

    fn violation(&self, s: &PartialState, a: &[f64]) -> f64 {
        let PartialState::Path(p) = s else { wrong_state("path", s) };
        box_violation(a) + self.spline_violation(p, &crate::env::clip_unit(a))
    }
}

/// The two-disk toy: feasible inside either disk.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ToyFeasibility;

impl FeasibilityModel for ToyFeasibility {
    fn action_dim(&self) -> usize {
        2
    }

    fn violation(&self, s: &PartialState, a: &[f64]) -> f64 {
        let PartialState::Disks(d) = s else { wrong_state("toy", s) };
        box_violation(a) + d.violation(a)
    }

    fn mode_of(&self, s: &PartialState, a: &[f64]) -> Option<usize> {
        let PartialState::Disks(d) = s else { wrong_state("toy", s) };
        d.mode_of(a)
    }
}

/// 1D analytic model `G(a) = max(0, a − 1)²` used to check projection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HalfLineFeasibility;

impl FeasibilityModel for HalfLineFeasibility {
    fn action_dim(&self) -> usize {
        1
    }

    fn violation(&self, _s: &PartialState, a: &[f64]) -> f64 {
        (a[0] - 1.0).max(0.0).powi(2)
    }
}

/// Placeholder state for models that ignore it.
pub fn empty_state() -> PartialState {
    PartialState::Disks(ToyDiskState::default())
}

/// Highest per-transition violation along one rolled-out episode.
///
/// Each transition is scored by `G` of the model on the state it started
/// from, which equals the joint cost for exact models.
pub fn trajectory_cost(
    env: &mut dyn Environment,
    model: &dyn FeasibilityModel,
    seed: u64,
    mut policy: impl FnMut(&Observation) -> Vec<f64>,
) -> f64 {
    let mut obs = env.reset(seed);
    let mut worst = 0.0f64;
    loop {
        let a = policy(&obs);
        worst = worst.max(model.violation(&env.partial(), &a));
        let r = env.step(&a);
        obs = r.observation;
        if r.done {
            return worst;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_cost_examples() {
        assert!((joint_cost(&[0.5, -0.2], &[0.3, 0.0]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(joint_cost(&[0.3, 0.0], &[0.3, 0.0]).unwrap(), 0.0);
        assert!(matches!(joint_cost(&[1.0], &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn cost_spec_rejects_infinite_bounds() {
        assert!(CostSpec::new(vec![("speed".into(), f64::INFINITY)]).is_err());
        let spec = CostSpec::new(vec![("a".into(), 1.0), ("b".into(), 0.5)]).unwrap();
        assert_eq!(spec.joint_cost(&[2.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn box_term() {
        assert_eq!(box_violation(&[0.5, -1.0]), 0.0);
        assert!((box_violation(&[1.5, -1.25]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn half_line_model() {
        let s = empty_state();
        assert!(HalfLineFeasibility.feasible(&s, &[1.0]));
        assert!((HalfLineFeasibility.violation(&s, &[1.5]) - 0.25).abs() < 1e-15);
    }
}
