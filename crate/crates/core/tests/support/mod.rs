//! Independent re-implementations used as test oracles. Nothing here calls
//! into the library's geometry or feasibility code.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

pub const TABLE: [(f64, f64, f64); 8] = [
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -FRAC_PI_2),
    (0.0, 0.316, FRAC_PI_2),
    (0.0825, 0.0, FRAC_PI_2),
    (-0.0825, 0.384, -FRAC_PI_2),
    (0.0, 0.0, FRAC_PI_2),
    (0.088, 0.0, FRAC_PI_2),
    (0.0, 0.107, 0.0),
];

pub const LIMITS: [(f64, f64); 7] = [
    (-2.7437, 2.7437),
    (-1.7837, 1.7837),
    (-2.9007, 2.9007),
    (-3.0421, -0.1518),
    (-2.8065, 2.8065),
    (0.5445, 4.5169),
    (-3.0159, 3.0159),
];

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn eye() -> M4 {
    let mut t = [[0.0; 4]; 4];
    for (i, row) in t.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    t
}

/// One link transform as the product of four elementary transforms.
pub fn link(a: f64, d: f64, alpha: f64, theta: f64) -> M4 {
    let (sa, ca) = alpha.sin_cos();
    let (st, ct) = theta.sin_cos();
    let rx = [[1.0, 0.0, 0.0, 0.0], [0.0, ca, -sa, 0.0], [0.0, sa, ca, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let tx = [[1.0, 0.0, 0.0, a], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let rz = [[ct, -st, 0.0, 0.0], [st, ct, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let tz = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, d], [0.0, 0.0, 0.0, 1.0]];
    mul(&mul(&mul(&rx, &tx), &rz), &tz)
}

/// Base origin plus every frame origin of the arm.
pub fn origins(q: &[f64; 7]) -> Vec<[f64; 3]> {
    let mut t = eye();
    let mut out = vec![[0.0; 3]];
    for (i, &(a, d, alpha)) in TABLE.iter().enumerate() {
        let theta = if i < 7 { q[i] } else { 0.0 };
        t = mul(&t, &link(a, d, alpha, theta));
        out.push([t[0][3], t[1][3], t[2][3]]);
    }
    out
}

pub fn flange(q: &[f64; 7]) -> [f64; 3] {
    *origins(q).last().unwrap()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Distance from `p` to a segment by ternary search on the projection.
pub fn seg_dist(p: &[f64; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dist(p, &at(m1)) < dist(p, &at(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    dist(p, &at(0.5 * (lo + hi)))
}

/// Brute-force arm check: limits, frame speeds, capsule/sphere overlap.
pub fn robot_ok(
    q: &[f64; 7],
    dq: &[f64; 7],
    spheres: &[([f64; 3], f64)],
    radius: f64,
    dt: f64,
    vmax: f64,
) -> bool {
    let mut next = *q;
    for i in 0..7 {
        next[i] += dq[i];
        if next[i] < LIMITS[i].0 || next[i] > LIMITS[i].1 {
            return false;
        }
    }
    let o0 = origins(q);
    let o1 = origins(&next);
    for (a, b) in o0.iter().zip(&o1) {
        if dist(a, b) / dt > vmax {
            return false;
        }
    }
    for w in o1.windows(2) {
        for (c, r) in spheres {
            if seg_dist(c, &w[0], &w[1]) < radius + r {
                return false;
            }
        }
    }
    true
}

/// Bezier point by de Casteljau.
pub fn casteljau(p: &[[f64; 2]; 4], t: f64) -> [f64; 2] {
    let lerp = |a: [f64; 2], b: [f64; 2]| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let q = [lerp(p[0], p[1]), lerp(p[1], p[2]), lerp(p[2], p[3])];
    let r = [lerp(q[0], q[1]), lerp(q[1], q[2])];
    lerp(r[0], r[1])
}

/// Arc length from 10⁴ de Casteljau samples.
pub fn dense_length(p: &[[f64; 2]; 4]) -> f64 {
    let n = 10_000;
    let mut prev = casteljau(p, 0.0);
    let mut total = 0.0;
    for k in 1..=n {
        let q = casteljau(p, k as f64 / n as f64);
        total += ((q[0] - prev[0]).powi(2) + (q[1] - prev[1]).powi(2)).sqrt();
        prev = q;
    }
    total
}

/// Curvature from central differences of de Casteljau points.
pub fn fd_curvature(p: &[[f64; 2]; 4], t: f64) -> f64 {
    let h = 1e-4;
    let a = casteljau(p, t - h);
    let b = casteljau(p, t);
    let c = casteljau(p, t + h);
    let d1 = [(c[0] - a[0]) / (2.0 * h), (c[1] - a[1]) / (2.0 * h)];
    let d2 = [(c[0] - 2.0 * b[0] + a[0]) / (h * h), (c[1] - 2.0 * b[1] + a[1]) / (h * h)];
    (d1[0] * d2[1] - d1[1] * d2[0]).abs() / (d1[0] * d1[0] + d1[1] * d1[1]).powf(1.5)
}

/// Gaussian KDE by a plain double loop in the linear domain.
pub fn kde_double_loop(support: &[Vec<f64>], q: &[f64], sigma: f64) -> f64 {
    let d = q.len() as f64;
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-d / 2.0);
    let mut s = 0.0;
    for a in support {
        let mut sq = 0.0;
        for k in 0..q.len() {
            sq += (q[k] - a[k]).powi(2);
        }
        s += norm * (-sq / (2.0 * sigma * sigma)).exp();
    }
    s / support.len() as f64
}
