use actmap::env::{
    parse_scene, straight_action, Environment, PartialGenerator, PathConfig, PathEnv, RobotConfig, RobotEnv, Target,
    ToyDiskState, ToyNavConfig, ToyNavEnv, Violation,
};
use actmap::geometry::{Pose, Rect, Vec2, Vec3};
use actmap::rng;

mod support;

use support::flange as oracle_flange;

#[test]
fn resets_are_deterministic() {
    let mut a = RobotEnv::new(RobotConfig::default());
    let mut b = RobotEnv::new(RobotConfig::default());
    assert_eq!(a.reset(42), b.reset(42));
    assert_eq!(a.scene(), b.scene());
    let mut p = PathEnv::new(PathConfig::default());
    let mut q = PathEnv::new(PathConfig::default());
    assert_eq!(p.reset(7), q.reset(7));
    assert_eq!(p.scene(), q.scene());
}

#[test]
fn robot_obstacle_count_capped() {
    let mut env = RobotEnv::new(RobotConfig::default());
    for seed in 0..1000 {
        env.reset(seed);
        assert!(env.obstacles().len() <= 20);
        let terms = env.config.transition_terms(env.joints(), &[0.0; 7], env.obstacles());
        assert_eq!(terms.total(), 0.0, "start configuration must be valid (seed {seed})");
    }
}

#[test]
fn path_reset_is_clean() {
    let mut env = PathEnv::new(PathConfig::default());
    for seed in 0..1000 {
        env.reset(seed);
        assert_eq!(env.rects().len(), 30);
        assert_eq!(env.targets().len(), 10);
        assert!(env.targets().iter().all(|t| !t.collected));
        let p = env.position();
        assert!(env.rects().iter().all(|r| !r.contains(&p)));
    }
}

#[test]
fn robot_zero_action_is_neutral() {
    let mut env = RobotEnv::new(RobotConfig::default());
    env.reset(3);
    let before = *env.joints();
    let r = env.step(&[0.0; 7]);
    assert_eq!(r.reward, 0.0);
    assert_eq!(r.violation, None);
    assert_eq!(*env.joints(), before);
}

#[test]
fn robot_reward_is_distance_decrement() {
    let cfg = RobotConfig { w_rot: 0.0, ..RobotConfig::default() };
    let mut env = RobotEnv::new(cfg.clone());
    env.reset(5);
    let q0 = *env.joints();
    // Move joint 2 so the flange travels 0.1 m, target placed beyond it on the same ray.
    let travel = |dq: f64| {
        let mut q = q0;
        q[1] += dq;
        let (a, b) = (oracle_flange(&q0), oracle_flange(&q));
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt()
    };
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if travel(mid) < 0.1 { lo = mid } else { hi = mid }
    }
    let dq = 0.5 * (lo + hi);
    let mut q1 = q0;
    q1[1] += dq;
    let (p0, p1) = (oracle_flange(&q0), oracle_flange(&q1));
    let u = Vec3::new(p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]).normalize();
    let target = Vec3::new(p0[0], p0[1], p0[2]) + u * 0.5;
    env.set_target(Pose { rotation: env.flange().rotation, translation: target });
    let mut d = [0.0; 7];
    d[1] = dq;
    let r = env.step_deltas(&d);
    assert!((r.reward - 0.1).abs() < 1e-9, "reward {}", r.reward);
}

#[test]
fn joint_one_past_limit_terminates() {
    let mut env = RobotEnv::new(RobotConfig::default());
    env.reset(1);
    let mut q = *env.joints();
    q[0] = 2.74;
    env.set_state(q, q, vec![]);
    let r = env.step_deltas(&[0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(r.done);
    assert_eq!(r.violation, Some(Violation::JointLimit));
}

#[test]
fn robot_rewards_telescope() {
    let cfg = RobotConfig { w_rot: 0.0, ..RobotConfig::default() };
    let mut env = RobotEnv::new(cfg);
    let mut rng = rng::seeded(9);
    for seed in 0..5 {
        env.reset(seed);
        let start = env.flange().position_distance(env.target());
        let mut total = 0.0;
        loop {
            let a: Vec<f64> = (0..7).map(|_| rng::uniform(&mut rng, -0.05, 0.05)).collect();
            let r = env.step(&a);
            total += r.reward;
            if r.done {
                break;
            }
        }
        let end = env.flange().position_distance(env.target());
        assert!((total - (start - end)).abs() < 1e-9);
    }
}

fn empty_path_env() -> PathEnv {
    let mut env = PathEnv::new(PathConfig::default());
    env.set_state(Vec2::new(0.2, 0.5), Vec2::new(1.0, 0.0), vec![], vec![]);
    env
}

#[test]
fn straight_spline_in_empty_arena() {
    let mut env = empty_path_env();
    let r = env.step(&straight_action(3.0));
    assert_eq!(r.violation, None);
    assert_eq!(r.reward, 0.0);
    assert!((env.position() - Vec2::new(0.25, 0.5)).norm() < 1e-9);
    assert!((env.heading() - Vec2::new(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn spline_through_target_collects_it() {
    let mut env = empty_path_env();
    let targets = vec![
        Target { center: Vec2::new(0.23, 0.5), radius: 0.02, collected: false },
        Target { center: Vec2::new(0.8, 0.8), radius: 0.02, collected: false },
    ];
    env.set_state(Vec2::new(0.2, 0.5), Vec2::new(1.0, 0.0), vec![], targets);
    let r = env.step(&straight_action(3.0));
    assert!((r.reward - 0.1).abs() < 1e-12);
    assert!(!r.done);
}

#[test]
fn spline_into_rectangle_collides() {
    let mut env = empty_path_env();
    let wall = Rect::new(Vec2::new(0.23, 0.4), Vec2::new(0.3, 0.6));
    env.set_state(Vec2::new(0.2, 0.5), Vec2::new(1.0, 0.0), vec![wall], vec![]);
    let r = env.step(&straight_action(3.0));
    assert!(r.done);
    assert_eq!(r.violation, Some(Violation::Collision));
}

#[test]
fn collecting_everything_pays_two() {
    let mut env = empty_path_env();
    let targets = (0..10)
        .map(|k| Target { center: Vec2::new(0.1 + 0.05 * k as f64 + 0.025, 0.5), radius: 0.02, collected: false })
        .collect();
    env.set_state(Vec2::new(0.1, 0.5), Vec2::new(1.0, 0.0), vec![], targets);
    let mut total = 0.0;
    for _ in 0..10 {
        let r = env.step(&straight_action(3.0));
        total += r.reward;
        if r.done {
            break;
        }
    }
    assert!((total - 2.0).abs() < 1e-12, "total {total}");
}

#[test]
fn violations_always_terminate() {
    let mut rng = rng::seeded(4);
    let mut envs: Vec<Box<dyn Environment>> = vec![
        Box::new(RobotEnv::new(RobotConfig::default())),
        Box::new(PathEnv::new(PathConfig::default())),
        Box::new(ToyNavEnv::new(ToyNavConfig::default())),
    ];
    for env in envs.iter_mut() {
        for ep in 0..20 {
            env.reset(ep);
            loop {
                let a: Vec<f64> = (0..env.action_dim()).map(|_| rng::uniform(&mut rng, -1.0, 1.0)).collect();
                let r = env.step(&a);
                assert!(r.observation.conforms(&env.obs_spec()));
                if r.violation.is_some() {
                    assert!(r.done);
                }
                if r.done {
                    break;
                }
            }
        }
    }
}

#[test]
fn robot_partial_states_admit_the_null_action() {
    let cfg = RobotConfig::default();
    for seed in 0..200 {
        let s = cfg.generate_partial(seed);
        assert_eq!(cfg.transition_terms(&s.joints, &[0.0; 7], &s.obstacles).total(), 0.0);
    }
}

#[test]
fn partial_states_carry_no_objective_fields() {
    let gens = [
        PartialGenerator::Robot(RobotConfig::default()),
        PartialGenerator::Path(PathConfig::default()),
        PartialGenerator::FixedDisks(ToyDiskState::default()),
    ];
    for g in &gens {
        let obs = g.generate(1).observation();
        assert!(obs.conforms(&g.partial_spec()));
    }
    // The full observation has a target set the partial one lacks.
    let env = PathEnv::new(PathConfig::default());
    assert_eq!(env.obs_spec().set_dims.len(), 2);
    assert_eq!(env.partial_spec().set_dims.len(), 1);
}

#[test]
fn partial_generators_are_denser() {
    let rc = RobotConfig::default();
    let mut env = RobotEnv::new(rc.clone());
    let (mut reset_count, mut partial_count) = (0usize, 0usize);
    for seed in 0..1000 {
        env.reset(seed);
        reset_count += env.obstacles().len();
        partial_count += rc.generate_partial(seed).obstacles.len();
    }
    assert!(partial_count > reset_count, "{partial_count} vs {reset_count}");

    let pc = PathConfig::default();
    let mut penv = PathEnv::new(pc.clone());
    let (mut reset_rects, mut partial_rects) = (0usize, 0usize);
    for seed in 0..1000 {
        penv.reset(seed);
        reset_rects += penv.rects().len();
        partial_rects += pc.generate_partial(seed).rects.len();
    }
    assert!(partial_rects > reset_rects);
}

#[test]
fn toy_disks() {
    let s = ToyDiskState::default();
    assert!(actmap::env::toy_feasible(&s, &[-0.5, 0.0]));
    assert!(!actmap::env::toy_feasible(&s, &[0.0, 0.0]));
    let mut rng = rng::seeded(0);
    let n = 1_000_000;
    let hits = (0..n)
        .filter(|_| {
            let a = [rng::uniform(&mut rng, -1.0, 1.0), rng::uniform(&mut rng, -1.0, 1.0)];
            actmap::env::toy_feasible(&s, &a)
        })
        .count();
    let frac = hits as f64 / n as f64;
    let expected = (std::f64::consts::PI * 0.09 * 2.0) / 4.0;
    assert!((frac - expected).abs() / expected < 0.01, "{frac} vs {expected}");
    assert!((s.area_fraction() - expected).abs() < 1e-15);
}

#[test]
fn scenes_round_trip() {
    let mut envs: Vec<Box<dyn Environment>> = vec![
        Box::new(RobotEnv::new(RobotConfig::default())),
        Box::new(PathEnv::new(PathConfig::default())),
        Box::new(ToyNavEnv::new(ToyNavConfig::default())),
    ];
    for env in envs.iter_mut() {
        env.reset(11);
        let scene = env.scene();
        assert_eq!(parse_scene(&scene.to_text()).unwrap(), scene);
    }
    assert!(parse_scene("robot\njoints 1").is_err());
}
