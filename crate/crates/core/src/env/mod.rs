//! Environments behind one reset/step interface.
//!
//! Every environment exposes two views of its state: a full [`Observation`]
//! for the objective policy and a [`PartialState`] carrying only what the
//! feasibility model needs. Partial states can also be generated directly,
//! without an episode, for feasibility pretraining.

mod path;
mod robot;
mod scene;
mod toy;

pub use path::{decode_spline, straight_action, PathConfig, PathEnv, PathPartial, Target};
pub use robot::{RobotConfig, RobotEnv, RobotPartial, RobotTerms};
pub use scene::{parse_scene, Scene, SCENE_HEADER};
pub use toy::{toy_feasible, ToyDiskState, ToyNavConfig, ToyNavEnv};

use crate::rng;

/// Ego features plus any number of unordered entity sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub ego: Vec<f64>,
    pub sets: Vec<Vec<Vec<f64>>>,
}

/// Shape of an [`Observation`]: ego width and per-set feature width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsSpec {
    pub ego_dim: usize,
    pub set_dims: Vec<usize>,
}

impl Observation {
    pub fn conforms(&self, spec: &ObsSpec) -> bool {
        self.ego.len() == spec.ego_dim
            && self.sets.len() == spec.set_dims.len()
            && self.sets.iter().zip(&spec.set_dims).all(|(s, &w)| s.iter().all(|e| e.len() == w))
    }
}

/// Which constraint a transition broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    JointLimit,
    Speed,
    Collision,
    OutOfArena,
    Curvature,
    SplineLength,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub violation: Option<Violation>,
    pub timeout: bool,
}

/// Feasibility-relevant part of a state.
#[derive(Debug, Clone, PartialEq)]
pub enum PartialState {
    Robot(RobotPartial),
    Path(PathPartial),
    Disks(ToyDiskState),
}

impl PartialState {
    pub fn observation(&self) -> Observation {
        match self {
            PartialState::Robot(s) => s.observation(),
            PartialState::Path(s) => s.observation(),
            PartialState::Disks(s) => s.observation(),
        }
    }
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn action_dim(&self) -> usize;
    fn obs_spec(&self) -> ObsSpec;
    /// Spec of [`PartialState::observation`] for this environment.
    fn partial_spec(&self) -> ObsSpec;
    fn reset(&mut self, seed: u64) -> Observation;
    fn observation(&self) -> Observation;
    fn partial(&self) -> PartialState;
    /// Action in `[-1, 1]^d`; values outside are clipped.
    fn step(&mut self, action: &[f64]) -> StepResult;
    /// A known always-safe action, if the environment has one.
    fn null_action(&self) -> Option<Vec<f64>> {
        None
    }
    fn scene(&self) -> Scene;
}

/// Source of partial states for feasibility pretraining.
#[derive(Debug, Clone, PartialEq)]
pub enum PartialGenerator {
    Robot(RobotConfig),
    Path(PathConfig),
    /// Always the same disk pair.
    FixedDisks(ToyDiskState),
    /// A random disjoint disk pair per seed.
    RandomDisks,
}

impl PartialGenerator {
    pub fn generate(&self, seed: u64) -> PartialState {
        match self {
            PartialGenerator::Robot(c) => PartialState::Robot(c.generate_partial(seed)),
            PartialGenerator::Path(c) => PartialState::Path(c.generate_partial(seed)),
            PartialGenerator::FixedDisks(d) => PartialState::Disks(d.clone()),
            PartialGenerator::RandomDisks => PartialState::Disks(ToyDiskState::random(&mut rng::seeded(seed))),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            PartialGenerator::Robot(_) => 7,
            PartialGenerator::Path(_) => 5,
            _ => 2,
        }
    }

    pub fn partial_spec(&self) -> ObsSpec {
        match self {
            PartialGenerator::Robot(_) => RobotPartial::spec(),
            PartialGenerator::Path(_) => PathPartial::spec(),
            _ => ToyDiskState::spec(),
        }
    }
}

pub(crate) fn clip_unit(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) }).collect()
}
