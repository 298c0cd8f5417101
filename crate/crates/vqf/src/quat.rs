//! Minimal quaternion / vector / 3x3 matrix math used by the estimator.
//!
//! Quaternions are Hamilton convention, scalar part first. A quaternion `q`
//! describing the orientation of frame S relative to frame R rotates
//! coordinates from S to R via [`Quaternion::rotate`].

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Three-dimensional vector with `f64` components.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion for 3D rotations, scalar part first.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Rotation by `angle` (radians) about `axis`. The axis does not have to
    /// be normalized but must be nonzero.
    pub fn from_angle_axis(angle: f64, axis: Vec3) -> Quaternion {
        let u = axis.normalized().unwrap_or(Vec3::Z);
        let (s, c) = (0.5 * angle).sin_cos();
        Quaternion::new(c, s * u.x, s * u.y, s * u.z)
    }

    /// Hamilton product `self ⊗ other`: applying the result rotates first by
    /// `other`, then by `self`.
    pub fn multiply(self, o: Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Conjugate; equals the inverse for unit quaternions.
    pub fn inverse(self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotates sensor-frame coordinates into the reference frame:
    /// `q ⊗ (0, v) ⊗ q⁻¹`.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn dot(self, o: Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Scaled to unit norm. Zero quaternions normalize to the identity so
    /// that downstream state always stays a valid rotation.
    pub fn normalized(self) -> Quaternion {
        let n = self.norm();
        if n > 0.0 {
            Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
        } else {
            Quaternion::IDENTITY
        }
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, o: Quaternion) -> Quaternion {
        self.multiply(o)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    /// Rotation matrix equivalent of a unit quaternion: `Mat3::from_quat(q) * v`
    /// equals `q.rotate(v)`.
    pub fn from_quat(q: Quaternion) -> Mat3 {
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        Mat3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    pub fn diag(d: [f64; 3]) -> Mat3 {
        Mat3([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn scaled_identity(s: f64) -> Mat3 {
        Mat3::diag([s, s, s])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.0[0][0] * v.x + self.0[0][1] * v.y + self.0[0][2] * v.z,
            self.0[1][0] * v.x + self.0[1][1] * v.y + self.0[1][2] * v.z,
            self.0[2][0] * v.x + self.0[2][1] * v.y + self.0[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn add(&self, o: &Mat3) -> Mat3 {
        let mut r = self.0;
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += o.0[i][j];
            }
        }
        Mat3(r)
    }

    pub fn sub(&self, o: &Mat3) -> Mat3 {
        let mut r = self.0;
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell -= o.0[i][j];
            }
        }
        Mat3(r)
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut r = self.0;
        for row in r.iter_mut() {
            for cell in row.iter_mut() {
                *cell *= s;
            }
        }
        Mat3(r)
    }

    /// `(M + Mᵀ) / 2`, used to keep covariance matrices exactly symmetric.
    pub fn symmetrized(&self) -> Mat3 {
        let m = &self.0;
        let s = |i: usize, j: usize| 0.5 * (m[i][j] + m[j][i]);
        Mat3([
            [m[0][0], s(0, 1), s(0, 2)],
            [s(0, 1), m[1][1], s(1, 2)],
            [s(0, 2), s(1, 2), m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate, or `None` when the determinant is not
    /// usable (zero, subnormal or non-finite).
    pub fn inverse(&self) -> Option<Mat3> {
        let d = self.det();
        if !d.is_finite() || d.abs() < f64::MIN_POSITIVE {
            return None;
        }
        let m = &self.0;
        let inv_d = 1.0 / d;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        Some(Mat3([
            [
                cof(1, 2, 1, 2) * inv_d,
                -cof(0, 2, 1, 2) * inv_d,
                cof(0, 1, 1, 2) * inv_d,
            ],
            [
                -cof(1, 2, 0, 2) * inv_d,
                cof(0, 2, 0, 2) * inv_d,
                -cof(0, 1, 0, 2) * inv_d,
            ],
            [
                cof(1, 2, 0, 1) * inv_d,
                -cof(0, 2, 0, 1) * inv_d,
                cof(0, 1, 0, 1) * inv_d,
            ],
        ]))
    }
}

/// Wraps an angle to `[-π, π]`.
///
/// Idempotent: values already inside the interval are returned bit-exactly.
/// Inputs at odd multiples of π map deterministically to the representable
/// value nearest ±π produced by `x % 2π`; in particular `-3π` lands on the
/// -π side.
pub fn wrap_to_pi(angle: f64) -> f64 {
    let mut r = angle % (2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    } else if r < -PI {
        r += 2.0 * PI;
    }
    r
}
