use super::{clip_unit, Environment, ObsSpec, Observation, PartialState, Scene, StepResult, Violation};
use crate::geometry::Vec2;
use crate::rng::{self, Rng};

/// Two disjoint disks inside `[-1, 1]²`; their union is the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDiskState {
    pub centers: [Vec2; 2],
    pub radii: [f64; 2],
}

impl Default for ToyDiskState {
    fn default() -> Self {
        ToyDiskState { centers: [Vec2::new(-0.5, 0.0), Vec2::new(0.5, 0.0)], radii: [0.3, 0.3] }
    }
}

impl ToyDiskState {
    /// Random disjoint pair fully inside the square.
    pub fn random(rng: &mut Rng) -> Self {
        loop {
            let radii = [rng::uniform(rng, 0.15, 0.4), rng::uniform(rng, 0.15, 0.4)];
            let c = |rng: &mut Rng, r: f64| Vec2::new(rng::uniform(rng, -1.0 + r, 1.0 - r), rng::uniform(rng, -1.0 + r, 1.0 - r));
            let centers = [c(rng, radii[0]), c(rng, radii[1])];
            if (centers[0] - centers[1]).norm() > radii[0] + radii[1] + 0.05 {
                return ToyDiskState { centers, radii };
            }
        }
    }

    /// Index of the disk containing `a`, if any.
    pub fn mode_of(&self, a: &[f64]) -> Option<usize> {
        let p = Vec2::new(a[0], a[1]);
        (0..2).find(|&i| (p - self.centers[i]).norm() <= self.radii[i])
    }

    /// Distance outside the nearer disk, zero inside either.
    pub fn violation(&self, a: &[f64]) -> f64 {
        let p = Vec2::new(a[0], a[1]);
        (0..2).map(|i| ((p - self.centers[i]).norm() - self.radii[i]).max(0.0)).fold(f64::INFINITY, f64::min)
    }

    /// Area of the feasible set divided by the area of the action square.
    pub fn area_fraction(&self) -> f64 {
        std::f64::consts::PI * (self.radii[0].powi(2) + self.radii[1].powi(2)) / 4.0
    }

    pub fn spec() -> ObsSpec {
        ObsSpec { ego_dim: 6, set_dims: vec![] }
    }

    pub fn observation(&self) -> Observation {
        let [a, b] = self.centers;
        Observation { ego: vec![a.x, a.y, self.radii[0], b.x, b.y, self.radii[1]], sets: vec![] }
    }
}

/// `a` lies in one of the two disks.
pub fn toy_feasible(s: &ToyDiskState, a: &[f64]) -> bool {
    s.mode_of(a).is_some()
}

/// Navigation task whose per-step feasible actions are the two disks.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNavConfig {
    pub disks: ToyDiskState,
    /// Displacement per unit action.
    pub step_scale: f64,
    /// Goals sit at `(±goal_x, y)` with `|y| ≤ goal_y`.
    pub goal_x: f64,
    pub goal_y: f64,
    pub goal_radius: f64,
    pub goal_bonus: f64,
    pub timeout: usize,
}

impl Default for ToyNavConfig {
    fn default() -> Self {
        ToyNavConfig {
            disks: ToyDiskState::default(),
            step_scale: 0.1,
            goal_x: 0.6,
            goal_y: 0.2,
            goal_radius: 0.05,
            goal_bonus: 1.0,
            timeout: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyNavEnv {
    pub config: ToyNavConfig,
    position: Vec2,
    goal: Vec2,
    steps: usize,
}

impl ToyNavEnv {
    pub fn new(config: ToyNavConfig) -> Self {
        let mut env = ToyNavEnv { config, position: Vec2::zeros(), goal: Vec2::zeros(), steps: 0 };
        env.reset(0);
        env
    }

    pub fn position(&self) -> Vec2 {
        self.position
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }
}

impl Environment for ToyNavEnv {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec { ego_dim: 4, set_dims: vec![] }
    }

    fn partial_spec(&self) -> ObsSpec {
        ToyDiskState::spec()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = rng::seeded(seed);
        let side = if rng::uniform(&mut rng, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
        let y = rng::uniform(&mut rng, -self.config.goal_y, self.config.goal_y);
        self.goal = Vec2::new(side * self.config.goal_x, y);
        self.position = Vec2::zeros();
        self.steps = 0;
        self.observation()
    }

    fn observation(&self) -> Observation {
        Observation { ego: vec![self.position.x, self.position.y, self.goal.x, self.goal.y], sets: vec![] }
    }

    fn partial(&self) -> PartialState {
        PartialState::Disks(self.config.disks.clone())
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let a = clip_unit(action);
        self.steps += 1;
        let timeout = self.steps >= self.config.timeout;
        if !toy_feasible(&self.config.disks, &a) {
            return StepResult {
                observation: self.observation(),
                reward: 0.0,
                done: true,
                violation: Some(Violation::Infeasible),
                timeout,
            };
        }
        let before = (self.goal - self.position).norm();
        self.position += Vec2::new(a[0], a[1]) * self.config.step_scale;
        let after = (self.goal - self.position).norm();
        let reached = after < self.config.goal_radius;
        let reward = before - after + if reached { self.config.goal_bonus } else { 0.0 };
        StepResult { observation: self.observation(), reward, done: reached || timeout, violation: None, timeout }
    }

    fn null_action(&self) -> Option<Vec<f64>> {
        let c = self.config.disks.centers[0];
        Some(vec![c.x, c.y])
    }

    fn scene(&self) -> Scene {
        Scene::Toy { position: self.position, goal: self.goal, disks: self.config.disks.clone() }
    }
}
