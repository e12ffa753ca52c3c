use super::{clip_unit, Environment, ObsSpec, Observation, PartialState, Scene, StepResult, Violation};
use crate::geometry::{capsule_sphere_clearance, forward_kinematics, ArmPose, Pose, Sphere, Vec3, ARM_JOINT_LIMITS};
use crate::rng::{self, Rng};

/// Parameters of the arm environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub capsule_radius: f64,
    /// Seconds per step.
    pub dt: f64,
    /// Maximum Cartesian speed of any frame origin, m/s.
    pub max_speed: f64,
    /// Joint delta for a unit action, radians.
    pub max_delta: f64,
    pub timeout: usize,
    pub candidates: usize,
    pub max_obstacles: usize,
    pub sphere_radius: (f64, f64),
    /// Obstacle centre box: x/y in `±reach`, z in `z_range`.
    pub reach: f64,
    pub z_range: (f64, f64),
    pub w_pos: f64,
    pub w_rot: f64,
    pub min_target_distance: f64,
    /// Candidate spheres per generated partial state.
    pub partial_candidates: usize,
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            capsule_radius: 0.06,
            dt: 0.5,
            max_speed: 0.3,
            max_delta: std::f64::consts::FRAC_PI_2,
            timeout: 100,
            candidates: 30,
            max_obstacles: 20,
            sphere_radius: (0.04, 0.1),
            reach: 0.8,
            z_range: (0.05, 1.1),
            w_pos: 1.0,
            w_rot: 0.5,
            min_target_distance: 0.3,
            partial_candidates: 60,
        }
    }
}

/// Violation magnitudes of one arm transition; all zero when it is valid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotTerms {
    pub joint_limit: f64,
    pub speed: f64,
    pub collision: f64,
}

impl RobotTerms {
    pub fn total(&self) -> f64 {
        self.joint_limit + self.speed + self.collision
    }

    pub fn violation(&self) -> Option<Violation> {
        if self.joint_limit > 0.0 {
            Some(Violation::JointLimit)
        } else if self.speed > 0.0 {
            Some(Violation::Speed)
        } else if self.collision > 0.0 {
            Some(Violation::Collision)
        } else {
            None
        }
    }
}

impl RobotConfig {
    pub fn fk(&self, joints: &[f64; 7]) -> ArmPose {
        forward_kinematics(joints, self.capsule_radius)
    }

    /// Physical joint deltas for a normalized action.
    pub fn deltas(&self, action: &[f64]) -> [f64; 7] {
        let mut d = [0.0; 7];
        for (o, a) in d.iter_mut().zip(clip_unit(action)) {
            *o = a * self.max_delta;
        }
        d
    }

    /// Check the move `joints → joints + deltas` against the obstacles.
    pub fn transition_terms(&self, joints: &[f64; 7], deltas: &[f64; 7], obstacles: &[Sphere]) -> RobotTerms {
        let mut next = *joints;
        for (q, d) in next.iter_mut().zip(deltas) {
            *q += d;
        }
        let mut joint_limit = 0.0;
        for (q, (lo, hi)) in next.iter().zip(ARM_JOINT_LIMITS) {
            joint_limit += (lo - q).max(0.0) + (q - hi).max(0.0);
        }
        let before = self.fk(joints);
        let after = self.fk(&next);
        let mut speed = 0.0;
        for (o0, o1) in before.origins.iter().zip(&after.origins) {
            speed += ((o1 - o0).norm() / self.dt - self.max_speed).max(0.0);
        }
        let mut collision = 0.0;
        for c in &after.capsules {
            let worst = obstacles.iter().map(|s| (-capsule_sphere_clearance(c, s)).max(0.0)).fold(0.0, f64::max);
            collision += worst;
        }
        RobotTerms { joint_limit, speed, collision }
    }

    fn random_joints(&self, rng: &mut Rng) -> [f64; 7] {
        let mut q = [0.0; 7];
        for (v, (lo, hi)) in q.iter_mut().zip(ARM_JOINT_LIMITS) {
            *v = rng::uniform(rng, lo, hi);
        }
        q
    }

    fn random_sphere(&self, rng: &mut Rng) -> Sphere {
        let center = Vec3::new(
            rng::uniform(rng, -self.reach, self.reach),
            rng::uniform(rng, -self.reach, self.reach),
            rng::uniform(rng, self.z_range.0, self.z_range.1),
        );
        Sphere { center, radius: rng::uniform(rng, self.sphere_radius.0, self.sphere_radius.1) }
    }

    fn clear_of(arm: &ArmPose, s: &Sphere) -> bool {
        arm.capsules.iter().all(|c| capsule_sphere_clearance(c, s) > 0.0)
    }

    /// Random joints plus spheres that do not touch the arm.
    pub fn generate_partial(&self, seed: u64) -> RobotPartial {
        let mut rng = rng::derived(seed, 0x726f_626f_7470);
        let joints = self.random_joints(&mut rng);
        let arm = self.fk(&joints);
        let obstacles = (0..self.partial_candidates)
            .map(|_| self.random_sphere(&mut rng))
            .filter(|s| Self::clear_of(&arm, s))
            .collect();
        RobotPartial { joints, obstacles }
    }

    fn sample_scene(&self, seed: u64) -> Option<RobotScene> {
        let mut rng = rng::seeded(seed);
        for _ in 0..1000 {
            let start = self.random_joints(&mut rng);
            let goal = self.random_joints(&mut rng);
            let (a, b) = (self.fk(&start), self.fk(&goal));
            if a.flange.position_distance(&b.flange) < self.min_target_distance {
                continue;
            }
            let mut obstacles = Vec::new();
            for _ in 0..self.candidates {
                let s = self.random_sphere(&mut rng);
                if Self::clear_of(&a, &s) && Self::clear_of(&b, &s) && obstacles.len() < self.max_obstacles {
                    obstacles.push(s);
                }
            }
            return Some(RobotScene { start, target_joints: goal, target: b.flange, obstacles });
        }
        None
    }
}

struct RobotScene {
    start: [f64; 7],
    target_joints: [f64; 7],
    target: Pose,
    obstacles: Vec<Sphere>,
}

/// Joints and obstacles: what the arm's feasibility check reads.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotPartial {
    pub joints: [f64; 7],
    pub obstacles: Vec<Sphere>,
}

impl RobotPartial {
    pub fn spec() -> ObsSpec {
        ObsSpec { ego_dim: 7 + 24, set_dims: vec![4] }
    }

    pub fn observation(&self) -> Observation {
        let arm = forward_kinematics(&self.joints, 0.0);
        let mut ego = self.joints.to_vec();
        for o in &arm.origins[1..] {
            ego.extend_from_slice(o.as_slice());
        }
        Observation { ego, sets: vec![sphere_features(&self.obstacles)] }
    }
}

fn sphere_features(obstacles: &[Sphere]) -> Vec<Vec<f64>> {
    obstacles.iter().map(|s| vec![s.center.x, s.center.y, s.center.z, s.radius]).collect()
}

/// Kinematic 7-joint arm that must reach a target pose around spheres.
#[derive(Debug, Clone)]
pub struct RobotEnv {
    pub config: RobotConfig,
    joints: [f64; 7],
    target_joints: [f64; 7],
    target: Pose,
    obstacles: Vec<Sphere>,
    steps: usize,
}

impl RobotEnv {
    pub fn new(config: RobotConfig) -> Self {
        let mut env = RobotEnv {
            config,
            joints: [0.0, 0.0, 0.0, -1.5, 0.0, 1.5, 0.0],
            target_joints: [0.0; 7],
            target: Pose { rotation: Default::default(), translation: Vec3::zeros() },
            obstacles: Vec::new(),
            steps: 0,
        };
        env.reset(0);
        env
    }

    pub fn joints(&self) -> &[f64; 7] {
        &self.joints
    }

    pub fn target(&self) -> &Pose {
        &self.target
    }

    pub fn obstacles(&self) -> &[Sphere] {
        &self.obstacles
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Install an explicit scene (replay, tests).
    pub fn set_state(&mut self, joints: [f64; 7], target_joints: [f64; 7], obstacles: Vec<Sphere>) {
        self.joints = joints;
        self.target_joints = target_joints;
        self.target = self.config.fk(&target_joints).flange;
        self.obstacles = obstacles;
        self.steps = 0;
    }

    /// Replace the target pose only.
    pub fn set_target(&mut self, target: Pose) {
        self.target = target;
    }

    /// Step with physical joint deltas, clipped to `±max_delta`.
    pub fn step_deltas(&mut self, deltas: &[f64; 7]) -> StepResult {
        let mut d = *deltas;
        for v in d.iter_mut() {
            *v = v.clamp(-self.config.max_delta, self.config.max_delta);
        }
        let before = self.config.fk(&self.joints).flange;
        let terms = self.config.transition_terms(&self.joints, &d, &self.obstacles);
        for (q, dq) in self.joints.iter_mut().zip(d) {
            *q += dq;
        }
        let after = self.config.fk(&self.joints).flange;
        let reward = self.config.w_pos * (before.position_distance(&self.target) - after.position_distance(&self.target))
            + self.config.w_rot * (before.angle_to(&self.target) - after.angle_to(&self.target));
        self.steps += 1;
        let violation = terms.violation();
        let timeout = self.steps >= self.config.timeout;
        StepResult { observation: self.observation(), reward, done: violation.is_some() || timeout, violation, timeout }
    }

    pub fn flange(&self) -> Pose {
        self.config.fk(&self.joints).flange
    }
}

impl Environment for RobotEnv {
    fn name(&self) -> &'static str {
        "robot"
    }

    fn action_dim(&self) -> usize {
        7
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec { ego_dim: 19, set_dims: vec![4] }
    }

    fn partial_spec(&self) -> ObsSpec {
        RobotPartial::spec()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut s = seed;
        let scene = loop {
            if let Some(scene) = self.config.sample_scene(s) {
                break scene;
            }
            s = rng::derive_seed(s, 1);
        };
        self.joints = scene.start;
        self.target_joints = scene.target_joints;
        self.target = scene.target;
        self.obstacles = scene.obstacles;
        self.steps = 0;
        self.observation()
    }

    fn observation(&self) -> Observation {
        let f = self.flange();
        let rel = self.target.rotation * f.rotation.inverse();
        let mut ego = self.joints.to_vec();
        ego.extend_from_slice(f.translation.as_slice());
        ego.extend_from_slice(self.target.translation.as_slice());
        ego.extend_from_slice((self.target.translation - f.translation).as_slice());
        ego.extend_from_slice(rel.scaled_axis().as_slice());
        Observation { ego, sets: vec![sphere_features(&self.obstacles)] }
    }

    fn partial(&self) -> PartialState {
        PartialState::Robot(RobotPartial { joints: self.joints, obstacles: self.obstacles.clone() })
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let d = self.config.deltas(action);
        self.step_deltas(&d)
    }

    fn null_action(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; 7])
    }

    fn scene(&self) -> Scene {
        Scene::Robot { joints: self.joints, target_joints: self.target_joints, obstacles: self.obstacles.clone() }
    }
}
