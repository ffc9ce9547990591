//! 4-DOF planar similarity transforms (uniform scale, rotation, translation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// `p' = scale * R(rotation) * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl SimilarityTransform {
    pub const IDENTITY: Self = Self { scale: 1.0, rotation: 0.0, translation: (0.0, 0.0) };

    pub fn new(scale: f64, rotation: f64, translation: (f64, f64)) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("similarity scale must be positive, got {scale}")));
        }
        Ok(Self { scale, rotation, translation })
    }

    /// Build from the linear form `[a -b; b a] p + t`.
    fn from_linear(a: f64, b: f64, tx: f64, ty: f64) -> Self {
        Self { scale: a.hypot(b), rotation: b.atan2(a), translation: (tx, ty) }
    }

    fn linear(&self) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (self.scale * c, self.scale * s)
    }

    /// Row-major 2×3 affine matrix.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        let (a, b) = self.linear();
        [[a, -b, self.translation.0], [b, a, self.translation.1]]
    }

    pub fn apply(&self, p: Point) -> Point {
        let (a, b) = self.linear();
        [a * p[0] - b * p[1] + self.translation.0, b * p[0] + a * p[1] + self.translation.1]
    }

    pub fn apply_all(&self, points: &[Point]) -> Vec<Point> {
        points.iter().map(|&p| self.apply(p)).collect()
    }

    pub fn inverse(&self) -> Self {
        let (a, b) = self.linear();
        let d = a * a + b * b;
        let (ia, ib) = (a / d, -b / d);
        let (tx, ty) = self.translation;
        Self::from_linear(ia, ib, -(ia * tx - ib * ty), -(ib * tx + ia * ty))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let (a1, b1) = self.linear();
        let (a2, b2) = other.linear();
        let t = self.apply([other.translation.0, other.translation.1]);
        Self::from_linear(a1 * a2 - b1 * b2, a1 * b2 + b1 * a2, t[0], t[1])
    }
}

/// Least-squares similarity mapping `src` onto `dst`, minimizing
/// `Σ ‖T(src_i) − dst_i‖²` over scale, rotation and translation.
///
/// Needs at least three non-collinear source points.
pub fn estimate_similarity(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!("{} source vs {} target points", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("need 3 points, got {}", src.len())));
    }
    if src.iter().chain(dst).flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite landmark coordinate".into()));
    }
    let n = src.len() as f64;
    let mean = |pts: &[Point]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    };
    let (ms, md) = (mean(src), mean(dst));

    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let (mut num_a, mut num_b) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (x, y) = (s[0] - ms[0], s[1] - ms[1]);
        let (u, v) = (d[0] - md[0], d[1] - md[1]);
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        num_a += x * u + y * v;
        num_b += x * v - y * u;
    }
    let norm = sxx + syy;
    // Scatter-matrix determinant relative to its squared trace is zero exactly
    // when the points are collinear (or coincide).
    let det = sxx * syy - sxy * sxy;
    if norm <= f64::EPSILON || det / (norm * norm) < 1e-10 {
        return Err(Error::DegenerateGeometry("source points are collinear or coincident".into()));
    }
    let a = num_a / norm;
    let b = num_b / norm;
    if a == 0.0 && b == 0.0 {
        return Err(Error::DegenerateGeometry("target points collapse to a single point".into()));
    }
    let tx = md[0] - (a * ms[0] - b * ms[1]);
    let ty = md[1] - (b * ms[0] + a * ms[1]);
    Ok(SimilarityTransform::from_linear(a, b, tx, ty))
}

/// Wrap an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}
