use actmap::autodiff::Matrix;
use actmap::env::{
    straight_action, Environment, PartialState, PathConfig, PathEnv, PathPartial, RobotConfig, RobotEnv, ToyDiskState,
};
use actmap::feasibility::{
    joint_cost, trajectory_cost, FeasibilityModel, PathFeasibility, RobotFeasibility, ToyFeasibility,
};
use actmap::geometry::{Rect, Vec2};
use actmap::rng;

mod support;

/// Mixed-scale actions so both feasible and infeasible moves show up.
fn robot_action(r: &mut rng::Rng) -> Vec<f64> {
    let scale = 10f64.powf(rng::uniform(r, -3.0, 0.0));
    (0..7).map(|_| scale * rng::uniform(r, -1.0, 1.0)).collect()
}

#[test]
fn joint_cost_matches_clamp_and_sum() {
    let mut r = rng::seeded(0);
    for _ in 0..1000 {
        let n = 1 + (rng::uniform(&mut r, 0.0, 6.0) as usize);
        let c: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r, -2.0, 2.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
        let mut oracle = 0.0;
        for i in 0..n {
            if c[i] > w[i] {
                oracle += c[i] - w[i];
            }
        }
        assert_eq!(joint_cost(&c, &w).unwrap(), oracle);
    }
}

#[test]
fn robot_model_agrees_with_brute_force() {
    let cfg = RobotConfig::default();
    let model = RobotFeasibility { config: cfg.clone() };
    let mut r = rng::seeded(1);
    let (mut yes, mut no) = (0, 0);
    for i in 0..2000 {
        let s = cfg.generate_partial(i);
        let a = robot_action(&mut r);
        let mut dq = [0.0; 7];
        for k in 0..7 {
            dq[k] = a[k] * cfg.max_delta;
        }
        let spheres: Vec<([f64; 3], f64)> =
            s.obstacles.iter().map(|o| ([o.center.x, o.center.y, o.center.z], o.radius)).collect();
        let oracle = support::robot_ok(&s.joints, &dq, &spheres, cfg.capsule_radius, cfg.dt, cfg.max_speed);
        let state = PartialState::Robot(s);
        let g = model.feasible(&state, &a);
        assert_eq!(g, oracle, "pair {i}");
        assert_eq!(g, model.violation(&state, &a) == 0.0);
        if g { yes += 1 } else { no += 1 }
    }
    assert!(yes > 100 && no > 100, "{yes} feasible, {no} infeasible");
}

#[test]
fn robot_null_action_and_joint_four_limit() {
    let cfg = RobotConfig::default();
    let model = RobotFeasibility { config: cfg.clone() };
    let s = cfg.generate_partial(5);
    let state = PartialState::Robot(s.clone());
    assert!(model.feasible(&state, &[0.0; 7]));

    let mut q = s.joints;
    q[3] = -0.16;
    let state = PartialState::Robot(actmap::env::RobotPartial { joints: q, obstacles: vec![] });
    let mut a = [0.0; 7];
    a[3] = 0.02 / cfg.max_delta;
    assert!(!model.feasible(&state, &a));
    assert!(model.violation(&state, &a) > 0.0);
}

fn open_path_state() -> PartialState {
    PartialState::Path(PathPartial { position: Vec2::new(0.5, 0.5), heading: Vec2::new(1.0, 0.0), rects: vec![] })
}

#[test]
fn path_length_bounds() {
    let model = PathFeasibility::new(PathConfig::default());
    let s = open_path_state();
    assert!(model.feasible(&s, &straight_action(3.0)));
    assert!(!model.feasible(&s, &straight_action(2.0)));
    assert!(!model.feasible(&s, &straight_action(4.0)));
}

fn random_path_pair(cfg: &PathConfig, r: &mut rng::Rng, seed: u64) -> (PartialState, Vec<f64>) {
    let s = cfg.generate_partial(seed);
    let a: Vec<f64> = (0..5).map(|_| rng::uniform(r, -1.0, 1.0)).collect();
    (PartialState::Path(s), a)
}

#[test]
fn path_sample_counts_mostly_agree() {
    let cfg = PathConfig::default();
    let m64 = PathFeasibility::new(cfg.clone()).with_samples(64);
    let m128 = PathFeasibility::new(cfg.clone()).with_samples(128);
    let mut r = rng::seeded(2);
    let n = 2000;
    let mut agree = 0;
    for i in 0..n {
        let (s, a) = random_path_pair(&cfg, &mut r, i);
        let (g64, g128) = (m64.feasible(&s, &a), m128.feasible(&s, &a));
        assert_eq!(g64, m64.violation(&s, &a) == 0.0);
        agree += (g64 == g128) as usize;
    }
    assert!(agree as f64 / n as f64 >= 0.98);
}

#[test]
fn refinement_never_more_permissive_at_shared_points() {
    let cfg = PathConfig::default();
    let mut r = rng::seeded(3);
    for s_count in [4usize, 8, 16, 33] {
        let coarse = PathFeasibility::new(cfg.clone()).with_samples(s_count);
        let fine = PathFeasibility::new(cfg.clone()).with_samples(2 * s_count - 1);
        for i in 0..300 {
            let (s, a) = random_path_pair(&cfg, &mut r, i);
            if !coarse.feasible(&s, &a) {
                // Length can only grow under refinement, so a too-long spline stays too long; too-short
                // splines are the one case where the finer polyline can newly pass.
                let PartialState::Path(p) = &s else { unreachable!() };
                let curve = actmap::env::decode_spline(p.position, p.heading, &a, cfg.step_length);
                let short = curve.polyline_length(s_count).unwrap() < cfg.length_factors.0 * cfg.step_length;
                if !short {
                    assert!(!fine.feasible(&s, &a));
                }
            }
        }
    }
}

#[test]
fn obstacle_order_does_not_matter() {
    let rc = RobotConfig::default();
    let robot = RobotFeasibility { config: rc.clone() };
    let pc = PathConfig::default();
    let path = PathFeasibility::new(pc.clone());
    let mut r = rng::seeded(4);
    for i in 0..200 {
        let s = rc.generate_partial(i);
        let mut rev = s.clone();
        rev.obstacles.reverse();
        let a = robot_action(&mut r);
        assert_eq!(
            robot.violation(&PartialState::Robot(s), &a).to_bits(),
            robot.violation(&PartialState::Robot(rev), &a).to_bits()
        );
        let p = pc.generate_partial(i);
        let mut prev = p.clone();
        prev.rects.reverse();
        let a: Vec<f64> = (0..5).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
        assert_eq!(
            path.violation(&PartialState::Path(p), &a).to_bits(),
            path.violation(&PartialState::Path(prev), &a).to_bits()
        );
    }
}

#[test]
fn batch_equals_single() {
    let s = PartialState::Disks(ToyDiskState::default());
    let mut r = rng::seeded(5);
    let mut m = Matrix::zeros(500, 2);
    for v in m.data_mut() {
        *v = rng::uniform(&mut r, -1.2, 1.2);
    }
    let batch = ToyFeasibility.violation_batch(&s, &m);
    for i in 0..500 {
        assert_eq!(batch[i].to_bits(), ToyFeasibility.violation(&s, m.row(i)).to_bits());
    }
}

#[test]
fn trajectory_cost_examples() {
    let rc = RobotConfig::default();
    let model = RobotFeasibility { config: rc.clone() };
    let mut env = RobotEnv::new(rc.clone());
    assert_eq!(trajectory_cost(&mut env, &model, 0, |_| vec![0.0; 7]), 0.0);

    // Joint 7 past its upper limit by 0.05; the flange origin sits on its axis so nothing moves.
    struct Breach(RobotEnv);
    impl Environment for Breach {
        fn name(&self) -> &'static str { "breach" }
        fn action_dim(&self) -> usize { 7 }
        fn obs_spec(&self) -> actmap::env::ObsSpec { self.0.obs_spec() }
        fn partial_spec(&self) -> actmap::env::ObsSpec { self.0.partial_spec() }
        fn reset(&mut self, seed: u64) -> actmap::env::Observation {
            self.0.reset(seed);
            let mut q = *self.0.joints();
            q[6] = 3.0159 - 0.01;
            self.0.set_state(q, q, vec![]);
            self.0.observation()
        }
        fn observation(&self) -> actmap::env::Observation { self.0.observation() }
        fn partial(&self) -> PartialState { self.0.partial() }
        fn step(&mut self, a: &[f64]) -> actmap::env::StepResult { self.0.step(a) }
        fn scene(&self) -> actmap::env::Scene { self.0.scene() }
    }
    let mut env = Breach(RobotEnv::new(rc.clone()));
    let mut step = 0;
    let cost = trajectory_cost(&mut env, &model, 0, |_| {
        step += 1;
        let mut a = vec![0.0; 7];
        if step == 3 {
            a[6] = 0.06 / rc.max_delta;
        }
        a
    });
    assert!((cost - 0.05).abs() < 1e-9, "{cost}");
}

#[test]
fn path_collision_is_infeasible() {
    let model = PathFeasibility::new(PathConfig::default());
    let wall = Rect::new(Vec2::new(0.6, 0.45), Vec2::new(0.62, 0.55));
    let s = PartialState::Path(PathPartial { position: Vec2::new(0.5, 0.5), heading: Vec2::new(1.0, 0.0), rects: vec![wall] });
    assert!(!model.feasible(&s, &straight_action(3.0)));
    let env = PathEnv::new(PathConfig::default());
    assert_eq!(env.action_dim(), 5);
}
