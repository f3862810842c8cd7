use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Vec3;
use crate::autodiff::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("rotation input is not finite")]
    NonFinite,
    #[error("quaternion has zero norm")]
    ZeroNorm,
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<R = f64> {
    pub rows: [[R; 3]; 3],
}

impl<R: Real> Mat3<R> {
    pub fn identity() -> Self {
        let o = R::zero();
        let l = R::constant(1.0);
        Self {
            rows: [[l, o, o], [o, l, o], [o, o, l]],
        }
    }

    pub fn from_columns(c0: Vec3<R>, c1: Vec3<R>, c2: Vec3<R>) -> Self {
        Self {
            rows: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    pub fn column(&self, j: usize) -> Vec3<R> {
        Vec3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    pub fn row(&self, i: usize) -> Vec3<R> {
        Vec3::from_array(self.rows[i])
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn mul_vec(&self, v: Vec3<R>) -> Vec3<R> {
        let a = v.to_array();
        Vec3::new(
            R::dot3(self.rows[0], a),
            R::dot3(self.rows[1], a),
            R::dot3(self.rows[2], a),
        )
    }

    /// `selfᵀ v`.
    pub fn tr_mul_vec(&self, v: Vec3<R>) -> Vec3<R> {
        Vec3::new(
            self.column(0).dot(v),
            self.column(1).dot(v),
            self.column(2).dot(v),
        )
    }

    pub fn mul(&self, o: &Self) -> Self {
        let cols = [o.column(0), o.column(1), o.column(2)];
        let mut rows = self.rows;
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                row[j] = R::dot3(self.rows[i], c.to_array());
            }
        }
        Self { rows }
    }

    pub fn value(&self) -> Mat3<f64> {
        let mut rows = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[i][j] = self.rows[i][j].value();
            }
        }
        Mat3 { rows }
    }

    /// `self · diag(d) · selfᵀ`, returned as a full symmetric matrix.
    pub fn congruence_diag(&self, d: [f64; 3]) -> Self {
        let r = &self.rows;
        let scaled: [[R; 3]; 3] = [
            [r[0][0] * d[0], r[0][1] * d[1], r[0][2] * d[2]],
            [r[1][0] * d[0], r[1][1] * d[1], r[1][2] * d[2]],
            [r[2][0] * d[0], r[2][1] * d[1], r[2][2] * d[2]],
        ];
        let mut out = self.rows;
        for i in 0..3 {
            for j in i..3 {
                let v = R::dot3(scaled[i], r[j]);
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        Self { rows: out }
    }
}

/// Unit quaternion `(w, x, y, z)` with canonical sign `w ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat<R = f64> {
    pub w: R,
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> UnitQuat<R> {
    pub fn identity() -> Self {
        Self::from_parts_unchecked(R::constant(1.0), R::zero(), R::zero(), R::zero())
    }

    /// Wraps components that are already unit-norm and canonical.
    pub fn from_parts_unchecked(w: R, x: R, y: R, z: R) -> Self {
        Self { w, x, y, z }
    }

    pub fn constant(q: UnitQuat<f64>) -> Self {
        Self::from_parts_unchecked(
            R::constant(q.w),
            R::constant(q.x),
            R::constant(q.y),
            R::constant(q.z),
        )
    }

    pub fn value(&self) -> UnitQuat<f64> {
        UnitQuat {
            w: self.w.value(),
            x: self.x.value(),
            y: self.y.value(),
            z: self.z.value(),
        }
    }

    /// Rotation by `angle` about unit `axis`.
    pub fn from_axis_angle(axis: Vec3<f64>, angle: R) -> Self {
        let half = angle * 0.5;
        let (s, c) = (half.sin(), half.cos());
        Self::from_parts_unchecked(c, s * axis.x, s * axis.y, s * axis.z).canonical()
    }

    /// Sign-flips so that `w ≥ 0`. The rotation is unchanged.
    pub fn canonical(self) -> Self {
        if self.w.value() < 0.0 {
            Self::from_parts_unchecked(-self.w, -self.x, -self.y, -self.z)
        } else {
            self
        }
    }

    /// Scales to unit norm and canonicalizes the sign.
    pub fn normalize(self) -> Self {
        let n = R::dot(
            &[self.w, self.x, self.y, self.z],
            &[self.w, self.x, self.y, self.z],
        )
        .sqrt();
        Self::from_parts_unchecked(self.w / n, self.x / n, self.y / n, self.z / n).canonical()
    }

    /// Hamilton product `self ⊗ o` (apply `o` first, then `self`). The result
    /// is not re-canonicalized.
    pub fn mul(&self, o: &Self) -> Self {
        let (a, b) = (self, o);
        Self::from_parts_unchecked(
            R::dot(&[a.w, a.x, a.y, a.z], &[b.w, -b.x, -b.y, -b.z]),
            R::dot(&[a.w, a.x, a.y, a.z], &[b.x, b.w, b.z, -b.y]),
            R::dot(&[a.w, a.x, a.y, a.z], &[b.y, -b.z, b.w, b.x]),
            R::dot(&[a.w, a.x, a.y, a.z], &[b.z, b.y, -b.x, b.w]),
        )
    }

    pub fn conjugate(&self) -> Self {
        Self::from_parts_unchecked(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotation matrix. Built from pairwise products, so `q` and `-q` give
    /// bitwise-identical matrices.
    pub fn to_matrix(&self) -> Mat3<R> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        let one = R::constant(1.0);
        Mat3 {
            rows: [
                [one - (yy + zz) * 2.0, (xy - wz) * 2.0, (xz + wy) * 2.0],
                [(xy + wz) * 2.0, one - (xx + zz) * 2.0, (yz - wx) * 2.0],
                [(xz - wy) * 2.0, (yz + wx) * 2.0, one - (xx + yy) * 2.0],
            ],
        }
    }

    pub fn rotate(&self, v: Vec3<R>) -> Vec3<R> {
        self.to_matrix().mul_vec(v)
    }

    pub fn to_rot6(&self) -> Rot6<R> {
        let m = self.to_matrix();
        Rot6([
            m.rows[0][0],
            m.rows[1][0],
            m.rows[2][0],
            m.rows[0][1],
            m.rows[1][1],
            m.rows[2][1],
        ])
    }

    /// Advances the orientation by the world-frame angular velocity `omega`
    /// over `dt` using the exponential map, then renormalizes.
    pub fn integrate(&self, omega: Vec3<R>, dt: f64) -> Self {
        let d = omega.scale_by(dt);
        let angle_sq = d.norm_squared();
        let a2 = angle_sq.value();
        // half-angle cosine and sin(|d|/2)/|d|, series expansion near zero
        let (c, s) = if a2 < 1e-12 {
            (
                R::constant(1.0) - angle_sq * (1.0 / 8.0),
                R::constant(0.5) - angle_sq * (1.0 / 48.0),
            )
        } else {
            let angle = angle_sq.sqrt();
            let half = angle * 0.5;
            (half.cos(), half.sin() / angle)
        };
        let dq = Self::from_parts_unchecked(c, d.x * s, d.y * s, d.z * s);
        dq.mul(self).normalize()
    }
}

impl UnitQuat<f64> {
    /// Normalizes arbitrary components; rejects non-finite or zero input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, RotationError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(RotationError::NonFinite);
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 {
            return Err(RotationError::ZeroNorm);
        }
        Ok(UnitQuat::from_parts_unchecked(w, x, y, z).normalize())
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation matrix to quaternion (Shepperd's method), canonical sign.
    pub fn from_matrix(m: &Mat3<f64>) -> Self {
        let r = &m.rows;
        let tr = r[0][0] + r[1][1] + r[2][2];
        let (w, x, y, z) = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            (
                0.25 * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            )
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            (
                (r[2][1] - r[1][2]) / s,
                0.25 * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            )
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            (
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                0.25 * s,
                (r[1][2] + r[2][1]) / s,
            )
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            (
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                0.25 * s,
            )
        };
        UnitQuat::from_parts_unchecked(w, x, y, z).normalize()
    }

    /// Geodesic distance on SO(3), in `[0, π]`.
    pub fn angle_to(&self, o: &Self) -> f64 {
        let d = self.conjugate().mul(o);
        let v = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        2.0 * v.atan2(d.w.abs())
    }

    /// Shortest-arc spherical interpolation.
    pub fn slerp(&self, o: &Self, t: f64) -> Self {
        let mut b = *o;
        let mut cos = self.w * b.w + self.x * b.x + self.y * b.y + self.z * b.z;
        if cos < 0.0 {
            b = UnitQuat::from_parts_unchecked(-b.w, -b.x, -b.y, -b.z);
            cos = -cos;
        }
        let (ka, kb) = if cos > 1.0 - 1e-12 {
            (1.0 - t, t)
        } else {
            let theta = cos.min(1.0).acos();
            let s = theta.sin();
            (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
        };
        UnitQuat::from_parts_unchecked(
            ka * self.w + kb * b.w,
            ka * self.x + kb * b.x,
            ka * self.y + kb * b.y,
            ka * self.z + kb * b.z,
        )
        .normalize()
    }

    /// Rotation vector (axis × angle) of this quaternion.
    pub fn log(&self) -> Vec3<f64> {
        let v = Vec3::new(self.x, self.y, self.z);
        let s = v.norm();
        if s < 1e-12 {
            return v.scale_by(2.0);
        }
        let angle = 2.0 * s.atan2(self.w);
        v.scale_by(angle / s)
    }
}

/// Continuous 6D rotation representation: the first two columns of the
/// rotation matrix, column-major `(c0.x, c0.y, c0.z, c1.x, c1.y, c1.z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot6<R = f64>(pub [R; 6]);

impl Rot6<f64> {
    /// Gram–Schmidt reconstruction of the full rotation matrix.
    pub fn to_matrix(&self) -> Mat3<f64> {
        let a = Vec3::new(self.0[0], self.0[1], self.0[2]);
        let b = Vec3::new(self.0[3], self.0[4], self.0[5]);
        let c0 = a.scale_by(1.0 / a.norm());
        let b = b - c0.scale_by(c0.dot(b));
        let c1 = b.scale_by(1.0 / b.norm());
        let c2 = c0.cross(c1);
        Mat3::from_columns(c0, c1, c2)
    }
}

/// 6D representation of `q`. Errors on non-finite input.
pub fn quat_to_rot6d(q: &UnitQuat<f64>) -> Result<Rot6<f64>, RotationError> {
    if !q.to_array().iter().all(|v| v.is_finite()) {
        return Err(RotationError::NonFinite);
    }
    Ok(q.to_rot6())
}

/// Exponential-map update of `q` by world-frame angular velocity `omega`.
pub fn quat_integrate(q: &UnitQuat<f64>, omega: Vec3<f64>, dt: f64) -> UnitQuat<f64> {
    q.integrate(omega, dt)
}

/// Geodesic angle between two orientations (radians, `[0, π]`).
pub fn quat_geodesic_angle(a: &UnitQuat<f64>, b: &UnitQuat<f64>) -> f64 {
    a.angle_to(b)
}
