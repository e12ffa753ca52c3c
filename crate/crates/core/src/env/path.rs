use super::{clip_unit, Environment, ObsSpec, Observation, PartialState, Scene, StepResult, Violation};
use crate::geometry::{CubicBezier, Rect, Vec2};
use crate::rng::{self, Rng};

/// Parameters of the spline path environment. Lengths are in arena units;
/// the arena is the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    /// Distance travelled per step.
    pub step_length: f64,
    pub kappa_max: f64,
    pub timeout: usize,
    pub rects: usize,
    pub rect_side: (f64, f64),
    pub targets: usize,
    pub target_radius: (f64, f64),
    /// Points checked along a candidate spline by the feasibility model.
    pub samples: usize,
    /// Allowed spline length range as multiples of `step_length`.
    pub length_factors: (f64, f64),
    /// Obstacle margin used by the feasibility model.
    pub margin: f64,
    /// Parameter samples used to follow a spline during a step.
    pub follow_samples: usize,
    /// Rectangles per generated partial state.
    pub partial_rects: usize,
    /// Minimum clearance of the start position from every rectangle.
    pub start_clearance: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        let step_length = 0.05;
        PathConfig {
            step_length,
            kappa_max: 1.0 / (3.0 * step_length),
            timeout: 200,
            rects: 30,
            rect_side: (0.03, 0.15),
            targets: 10,
            target_radius: (0.02, 0.05),
            samples: 64,
            length_factors: (2.5, 3.5),
            margin: 0.0,
            follow_samples: 256,
            partial_rects: 45,
            start_clearance: 0.05,
        }
    }
}

/// Circular target; collected once touched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub center: Vec2,
    pub radius: f64,
    pub collected: bool,
}

/// Map a 5D action in `[-1, 1]^5` to a spline anchored at `position` and
/// leaving it along `heading` (unit vector).
///
/// In the local frame (x along heading): `P1 = (s·1.5L, 0)` with
/// `s = (a0+1)/2`, `P2 = (−0.5L + (a1+1)/2·3.5L, a2·1.5L)`,
/// `P3 = ((a3+1)/2·4L, a4·2L)`.
pub fn decode_spline(position: Vec2, heading: Vec2, action: &[f64], step_length: f64) -> CubicBezier {
    let a = clip_unit(action);
    let l = step_length;
    let normal = Vec2::new(-heading.y, heading.x);
    let local = |x: f64, y: f64| position + heading * x + normal * y;
    let unit = |v: f64| 0.5 * (v + 1.0);
    CubicBezier::new(
        position,
        local(unit(a[0]) * 1.5 * l, 0.0),
        local(-0.5 * l + unit(a[1]) * 3.5 * l, a[2] * 1.5 * l),
        local(unit(a[3]) * 4.0 * l, a[4] * 2.0 * l),
    )
}

/// Action decoding to a straight spline of `factor · L` with evenly spaced
/// control points.
pub fn straight_action(factor: f64) -> [f64; 5] {
    let third = factor / 3.0;
    [
        2.0 * third / 1.5 - 1.0,
        2.0 * (2.0 * third + 0.5) / 3.5 - 1.0,
        0.0,
        2.0 * factor / 4.0 - 1.0,
        0.0,
    ]
}

fn inside_arena(p: &Vec2) -> bool {
    (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)
}

fn segment_point_distance(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

impl PathConfig {
    fn random_rect(&self, rng: &mut Rng) -> Rect {
        let w = rng::uniform(rng, self.rect_side.0, self.rect_side.1);
        let h = rng::uniform(rng, self.rect_side.0, self.rect_side.1);
        let x = rng::uniform(rng, 0.0, 1.0 - w);
        let y = rng::uniform(rng, 0.0, 1.0 - h);
        Rect::new(Vec2::new(x, y), Vec2::new(x + w, y + h))
    }

    fn random_heading(rng: &mut Rng) -> Vec2 {
        let phi = rng::uniform(rng, -std::f64::consts::PI, std::f64::consts::PI);
        Vec2::new(phi.cos(), phi.sin())
    }

    /// Random pose plus rectangles, dropping any that contain the pose.
    pub fn generate_partial(&self, seed: u64) -> PathPartial {
        let mut rng = rng::derived(seed, 0x7061_7468);
        let position = Vec2::new(rng::uniform(&mut rng, 0.0, 1.0), rng::uniform(&mut rng, 0.0, 1.0));
        let heading = Self::random_heading(&mut rng);
        let rects = (0..self.partial_rects)
            .map(|_| self.random_rect(&mut rng))
            .filter(|r| r.signed_distance(&position) > 0.0)
            .collect();
        PathPartial { position, heading, rects }
    }

    fn sample_scene(&self, seed: u64) -> Option<(Vec2, Vec2, Vec<Rect>, Vec<Target>)> {
        let mut rng = rng::seeded(seed);
        let rects: Vec<Rect> = (0..self.rects).map(|_| self.random_rect(&mut rng)).collect();
        let clear = |p: &Vec2, m: f64| rects.iter().all(|r| r.signed_distance(p) > m);
        let position = (0..1000).find_map(|_| {
            let p = Vec2::new(rng::uniform(&mut rng, 0.1, 0.9), rng::uniform(&mut rng, 0.1, 0.9));
            clear(&p, self.start_clearance).then_some(p)
        })?;
        let heading = Self::random_heading(&mut rng);
        let mut targets = Vec::with_capacity(self.targets);
        let mut attempts = 0;
        while targets.len() < self.targets {
            attempts += 1;
            if attempts > 1000 {
                return None;
            }
            let radius = rng::uniform(&mut rng, self.target_radius.0, self.target_radius.1);
            let center = Vec2::new(rng::uniform(&mut rng, radius, 1.0 - radius), rng::uniform(&mut rng, radius, 1.0 - radius));
            if clear(&center, radius) && (center - position).norm() > radius {
                targets.push(Target { center, radius, collected: false });
            }
        }
        Some((position, heading, rects, targets))
    }
}

/// Pose and rectangles: what the path feasibility check reads.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPartial {
    pub position: Vec2,
    pub heading: Vec2,
    pub rects: Vec<Rect>,
}

impl PathPartial {
    pub fn spec() -> ObsSpec {
        ObsSpec { ego_dim: 4, set_dims: vec![6] }
    }

    pub fn observation(&self) -> Observation {
        Observation {
            ego: vec![self.position.x, self.position.y, self.heading.x, self.heading.y],
            sets: vec![rect_features(&self.rects, self.position, self.heading)],
        }
    }
}

fn to_local(v: Vec2, heading: Vec2) -> Vec2 {
    Vec2::new(v.dot(&heading), heading.x * v.y - heading.y * v.x)
}

fn rect_features(rects: &[Rect], position: Vec2, heading: Vec2) -> Vec<Vec<f64>> {
    rects
        .iter()
        .map(|r| {
            let c = (r.min + r.max) * 0.5 - position;
            let l = to_local(c, heading);
            let h = (r.max - r.min) * 0.5;
            vec![c.x, c.y, l.x, l.y, h.x, h.y]
        })
        .collect()
}

/// Constant-speed agent that steers by cubic splines to collect targets.
#[derive(Debug, Clone)]
pub struct PathEnv {
    pub config: PathConfig,
    position: Vec2,
    heading: Vec2,
    rects: Vec<Rect>,
    targets: Vec<Target>,
    steps: usize,
}

impl PathEnv {
    pub fn new(config: PathConfig) -> Self {
        let mut env = PathEnv {
            config,
            position: Vec2::new(0.5, 0.5),
            heading: Vec2::new(1.0, 0.0),
            rects: Vec::new(),
            targets: Vec::new(),
            steps: 0,
        };
        env.reset(0);
        env
    }

    pub fn position(&self) -> Vec2 {
        self.position
    }

    pub fn heading(&self) -> Vec2 {
        self.heading
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    /// Install an explicit scene (replay, tests).
    pub fn set_state(&mut self, position: Vec2, heading: Vec2, rects: Vec<Rect>, targets: Vec<Target>) {
        self.position = position;
        self.heading = heading.normalize();
        self.rects = rects;
        self.targets = targets;
        self.steps = 0;
    }

    fn finish(&mut self, reward: f64, violation: Option<Violation>, all: bool) -> StepResult {
        self.steps += 1;
        let timeout = self.steps >= self.config.timeout;
        StepResult {
            observation: self.observation(),
            reward,
            done: violation.is_some() || all || timeout,
            violation,
            timeout,
        }
    }
}

impl Environment for PathEnv {
    fn name(&self) -> &'static str {
        "path"
    }

    fn action_dim(&self) -> usize {
        5
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec { ego_dim: 5, set_dims: vec![6, 4] }
    }

    fn partial_spec(&self) -> ObsSpec {
        PathPartial::spec()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut s = seed;
        let (position, heading, rects, targets) = loop {
            if let Some(scene) = self.config.sample_scene(s) {
                break scene;
            }
            s = rng::derive_seed(s, 1);
        };
        self.set_state(position, heading, rects, targets);
        self.observation()
    }

    fn observation(&self) -> Observation {
        let t = self.targets.iter().map(|t| {
            let c = to_local(t.center - self.position, self.heading);
            vec![c.x, c.y, t.radius, if t.collected { 1.0 } else { 0.0 }]
        });
        Observation {
            ego: vec![
                self.position.x,
                self.position.y,
                self.heading.x,
                self.heading.y,
                self.steps as f64 / self.config.timeout as f64,
            ],
            sets: vec![rect_features(&self.rects, self.position, self.heading), t.collect()],
        }
    }

    fn partial(&self) -> PartialState {
        PartialState::Path(PathPartial { position: self.position, heading: self.heading, rects: self.rects.clone() })
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let cfg = &self.config;
        let curve = decode_spline(self.position, self.heading, action, cfg.step_length);
        let ts = CubicBezier::params(cfg.follow_samples.max(2)).expect("at least two samples");
        let pts: Vec<Vec2> = ts.iter().map(|&t| curve.point(t)).collect();

        // Walk the polyline until the step length is used up.
        let mut travelled = 0.0;
        let mut path = vec![pts[0]];
        let mut params = vec![0.0];
        let mut end_t = None;
        for k in 1..pts.len() {
            let seg = (pts[k] - pts[k - 1]).norm();
            if travelled + seg >= cfg.step_length {
                let frac = if seg > 0.0 { (cfg.step_length - travelled) / seg } else { 0.0 };
                let t = ts[k - 1] + frac * (ts[k] - ts[k - 1]);
                path.push(pts[k - 1] + (pts[k] - pts[k - 1]) * frac);
                params.push(t);
                end_t = Some(t);
                break;
            }
            travelled += seg;
            path.push(pts[k]);
            params.push(ts[k]);
        }
        let Some(end_t) = end_t else {
            return self.finish(0.0, Some(Violation::SplineLength), false);
        };

        let violation = if path.iter().any(|p| !inside_arena(p)) {
            Some(Violation::OutOfArena)
        } else if path.iter().any(|p| self.rects.iter().any(|r| r.contains(p))) {
            Some(Violation::Collision)
        } else if params.iter().any(|&t| curve.curvature(t) > cfg.kappa_max) {
            Some(Violation::Curvature)
        } else {
            None
        };
        if violation.is_some() {
            return self.finish(0.0, violation, false);
        }

        let mut reward = 0.0;
        for t in self.targets.iter_mut().filter(|t| !t.collected) {
            let hit = path.windows(2).any(|w| segment_point_distance(&w[0], &w[1], &t.center) <= t.radius);
            if hit {
                t.collected = true;
                reward += 0.1;
            }
        }
        let all = self.targets.iter().all(|t| t.collected);
        if all && reward > 0.0 {
            reward += 1.0;
        }
        self.position = *path.last().expect("non-empty path");
        let d = curve.derivative(end_t);
        if d.norm() > 0.0 {
            self.heading = d.normalize();
        }
        self.finish(reward, None, all)
    }

    fn scene(&self) -> Scene {
        Scene::Path { position: self.position, heading: self.heading, rects: self.rects.clone(), targets: self.targets.clone() }
    }
}
