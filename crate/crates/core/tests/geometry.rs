use actmap::geometry::{
    capsule_sphere_clearance, forward_kinematics, point_segment_distance, Capsule, CubicBezier, Sphere, Vec2, Vec3,
    ARM_JOINT_LIMITS,
};
use actmap::rng;

mod support;

fn random_joints(r: &mut rng::Rng) -> [f64; 7] {
    let mut q = [0.0; 7];
    for (v, (lo, hi)) in q.iter_mut().zip(ARM_JOINT_LIMITS) {
        *v = rng::uniform(r, lo, hi);
    }
    q
}

#[test]
fn fk_matches_composition_oracle() {
    let mut r = rng::seeded(1);
    for _ in 0..100 {
        let q = random_joints(&mut r);
        let arm = forward_kinematics(&q, 0.06);
        let oracle = support::origins(&q);
        for (o, p) in arm.origins.iter().zip(&oracle) {
            let err = ((o.x - p[0]).powi(2) + (o.y - p[1]).powi(2) + (o.z - p[2]).powi(2)).sqrt();
            assert!(err <= 1e-9, "{err}");
        }
        assert_eq!(arm.capsules.len(), 8);
    }
}

#[test]
fn zero_pose_height_is_sum_of_offsets() {
    let arm = forward_kinematics(&[0.0; 7], 0.06);
    let oracle = support::flange(&[0.0; 7]);
    assert!((arm.flange.translation.z - oracle[2]).abs() < 1e-12);
    // Joints 2 and 4 flip z twice; the vertical offsets 0.333 + 0.316 + 0.384 stack, the flange d hangs down.
    assert!((oracle[2] - (0.333 + 0.316 + 0.384 - 0.107)).abs() < 1e-12);
}

#[test]
fn clearance_sign_matches_dense_sampling() {
    let mut r = rng::seeded(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut p = || Vec3::new(rng::uniform(&mut r, -1.0, 1.0), rng::uniform(&mut r, -1.0, 1.0), rng::uniform(&mut r, -1.0, 1.0));
        let (a, b, c) = (p(), p(), p());
        let cap = Capsule { a, b, radius: 0.1 };
        let s = Sphere { center: c, radius: 0.2 };
        let n = 2000;
        let dense = (0..=n)
            .map(|k| (a + (b - a) * (k as f64 / n as f64) - c).norm())
            .fold(f64::INFINITY, f64::min);
        let clearance = capsule_sphere_clearance(&cap, &s);
        let oracle = dense - 0.3;
        if (clearance < 0.0) != (oracle < 0.0) && oracle.abs() > 1e-3 {
            mismatches += 1;
        }
        assert!(clearance <= oracle + 1e-12);
        assert!((point_segment_distance(&c, &a, &b) - support::seg_dist(&[c.x, c.y, c.z], &[a.x, a.y, a.z], &[b.x, b.y, b.z])).abs() < 1e-9);
    }
    assert_eq!(mismatches, 0);
}

fn random_curve(r: &mut rng::Rng) -> ([[f64; 2]; 4], CubicBezier) {
    let mut p = [[0.0; 2]; 4];
    for q in p.iter_mut() {
        *q = [rng::uniform(r, -1.0, 1.0), rng::uniform(r, -1.0, 1.0)];
    }
    let v = |k: usize| Vec2::new(p[k][0], p[k][1]);
    (p, CubicBezier::new(v(0), v(1), v(2), v(3)))
}

#[test]
fn curvature_matches_finite_differences() {
    let mut r = rng::seeded(3);
    for _ in 0..100 {
        let (p, b) = random_curve(&mut r);
        for k in 1..20 {
            let t = k as f64 / 20.0;
            if b.derivative(t).norm() < 0.05 {
                continue;
            }
            let (an, fd) = (b.curvature(t), support::fd_curvature(&p, t));
            assert!((an - fd).abs() <= 1e-3 * an.max(1e-6), "t={t}: {an} vs {fd}");
        }
    }
}

#[test]
fn polyline_lengths_bracket_arc_length() {
    let mut r = rng::seeded(4);
    for _ in 0..50 {
        let (p, b) = random_curve(&mut r);
        let (l4, l64, l128) = (b.polyline_length(4).unwrap(), b.polyline_length(64).unwrap(), b.polyline_length(128).unwrap());
        let dense = support::dense_length(&p);
        assert!(l4 <= l64 + 1e-12 && l64 <= dense + 1e-12);
        assert!((l128 - dense).abs() / dense <= 0.005);
    }
}
