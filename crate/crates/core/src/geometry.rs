//! Kinematics and curve primitives shared by the environments.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// One row of a Denavit-Hartenberg table (modified / Craig ordering).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DHRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta: f64,
}

impl DHRow {
    pub const fn new(a: f64, d: f64, alpha: f64, theta: f64) -> Self {
        DHRow { a, d, alpha, theta }
    }
}

/// `RotX(α) · TransX(a) · RotZ(θ) · TransZ(d)`.
pub fn dh_transform(row: &DHRow) -> Matrix4<f64> {
    let (sa, ca) = row.alpha.sin_cos();
    let (st, ct) = row.theta.sin_cos();
    Matrix4::new(
        ct, -st, 0.0, row.a, //
        st * ca, ct * ca, -sa, -sa * row.d, //
        st * sa, ct * sa, ca, ca * row.d, //
        0.0, 0.0, 0.0, 1.0,
    )
}

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

/// Fixed part of the 7-joint arm table; `theta` holds joint offsets.
pub const ARM_DH: [DHRow; 8] = [
    DHRow::new(0.0, 0.333, 0.0, 0.0),
    DHRow::new(0.0, 0.0, -HALF_PI, 0.0),
    DHRow::new(0.0, 0.316, HALF_PI, 0.0),
    DHRow::new(0.0825, 0.0, HALF_PI, 0.0),
    DHRow::new(-0.0825, 0.384, -HALF_PI, 0.0),
    DHRow::new(0.0, 0.0, HALF_PI, 0.0),
    DHRow::new(0.088, 0.0, HALF_PI, 0.0),
    DHRow::new(0.0, 0.107, 0.0, 0.0),
];

/// Joint limits of the arm in radians, `(lower, upper)`.
pub const ARM_JOINT_LIMITS: [(f64, f64); 7] = [
    (-2.7437, 2.7437),
    (-1.7837, 1.7837),
    (-2.9007, 2.9007),
    (-3.0421, -0.1518),
    (-2.8065, 2.8065),
    (0.5445, 4.5169),
    (-3.0159, 3.0159),
];

/// Rigid pose: rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn from_homogeneous(t: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        Pose { rotation, translation: Vec3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]) }
    }

    /// Euclidean distance between translations.
    pub fn position_distance(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Rotation angle between orientations in `[0, π]`.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

/// Output of [`forward_kinematics`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPose {
    /// Base origin followed by the origin of every DH frame (9 points).
    pub origins: Vec<Vec3>,
    /// One capsule between each pair of consecutive origins.
    pub capsules: Vec<Capsule>,
    pub flange: Pose,
}

/// Compose the arm table at the given joint angles.
pub fn forward_kinematics(joints: &[f64; 7], capsule_radius: f64) -> ArmPose {
    let mut t = Matrix4::identity();
    let mut origins = Vec::with_capacity(9);
    origins.push(Vec3::zeros());
    for (i, base) in ARM_DH.iter().enumerate() {
        let mut row = *base;
        if i < 7 {
            row.theta += joints[i];
        }
        t *= dh_transform(&row);
        origins.push(Vec3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]));
    }
    let capsules = origins.windows(2).map(|w| Capsule { a: w[0], b: w[1], radius: capsule_radius }).collect();
    ArmPose { origins, capsules, flange: Pose::from_homogeneous(&t) }
}

/// Shortest distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Signed gap between capsule and sphere surfaces; negative on overlap.
pub fn capsule_sphere_clearance(c: &Capsule, s: &Sphere) -> f64 {
    point_segment_distance(&s.center, &c.a, &c.b) - (c.radius + s.radius)
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, p: &Vec2) -> f64 {
        let c = (self.min + self.max) * 0.5;
        let h = (self.max - self.min) * 0.5;
        let q = (p - c).abs() - h;
        let outside = Vec2::new(q.x.max(0.0), q.y.max(0.0)).norm();
        outside + q.x.max(q.y).min(0.0)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn inflate(&self, margin: f64) -> Rect {
        let m = Vec2::new(margin, margin);
        Rect { min: self.min - m, max: self.max + m }
    }
}

/// Planar cubic Bezier curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicBezier {
    pub p: [Vec2; 4],
}

impl CubicBezier {
    pub fn new(p0: Vec2, p1: Vec2, p2: Vec2, p3: Vec2) -> Self {
        CubicBezier { p: [p0, p1, p2, p3] }
    }

    pub fn point(&self, t: f64) -> Vec2 {
        let u = 1.0 - t;
        let [p0, p1, p2, p3] = self.p;
        p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t)
    }

    pub fn derivative(&self, t: f64) -> Vec2 {
        let u = 1.0 - t;
        let [p0, p1, p2, p3] = self.p;
        (p1 - p0) * (3.0 * u * u) + (p2 - p1) * (6.0 * u * t) + (p3 - p2) * (3.0 * t * t)
    }

    pub fn second_derivative(&self, t: f64) -> Vec2 {
        let [p0, p1, p2, p3] = self.p;
        (p2 - p1 * 2.0 + p0) * (6.0 * (1.0 - t)) + (p3 - p2 * 2.0 + p1) * (6.0 * t)
    }

    /// Unsigned curvature; `+inf` where the first derivative vanishes.
    pub fn curvature(&self, t: f64) -> f64 {
        let d1 = self.derivative(t);
        let d2 = self.second_derivative(t);
        let speed2 = d1.norm_squared();
        if speed2 == 0.0 {
            return f64::INFINITY;
        }
        (d1.x * d2.y - d1.y * d2.x).abs() / speed2.powf(1.5)
    }

    /// Parameter values `k / (S-1)`.
    pub fn params(samples: usize) -> Result<Vec<f64>> {
        if samples < 2 {
            return Err(Error::usage(format!("need at least 2 curve samples, got {samples}")));
        }
        let last = (samples - 1) as f64;
        Ok((0..samples).map(|k| k as f64 / last).collect())
    }

    /// Sum of chord lengths between `samples` equidistant parameter values.
    pub fn polyline_length(&self, samples: usize) -> Result<f64> {
        let pts: Vec<Vec2> = Self::params(samples)?.into_iter().map(|t| self.point(t)).collect();
        Ok(pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
    }
}
