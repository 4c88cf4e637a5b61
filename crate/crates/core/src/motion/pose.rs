use serde::{Deserialize, Serialize};

use super::rotation::{is_rotation, matrix_to_rot6d_unchecked, rot6d_to_matrix, rot_z, yaw_of, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rigid transform: `x_world = r · x_local + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Pose<T: Scalar> {
    pub t: Vec3<T>,
    pub r: Mat3<T>,
}

impl<T: Scalar> Default for SE3Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> SE3Pose<T> {
    pub fn identity() -> Self {
        Self { t: Vec3::zeros(), r: Mat3::identity() }
    }

    pub fn new(t: Vec3<T>, r: Mat3<T>) -> Self {
        Self { t, r }
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self { t, r: Mat3::identity() }
    }

    /// Pure heading-plus-translation transform.
    pub fn from_yaw(t: Vec3<T>, yaw: T) -> Self {
        Self { t, r: rot_z(yaw) }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t.iter().all(|v| v.is_finite()) || !is_rotation(&self.r, 1e-6) {
            return Err(Error::NotARotation("pose rotation not orthonormal or translation non-finite".into()));
        }
        Ok(())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self { t: self.r * other.t + self.t, r: self.r * other.r }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.r.transpose();
        Self { t: -(rt * self.t), r: rt }
    }

    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        self.r * p + self.t
    }

    pub fn yaw(&self) -> T {
        yaw_of(&self.r)
    }

    /// Flat layout `[tx, ty, tz, r6...]` used on disk.
    pub fn to_flat9(&self) -> [T; 9] {
        let r6 = matrix_to_rot6d_unchecked(&self.r);
        [self.t[0], self.t[1], self.t[2], r6[0], r6[1], r6[2], r6[3], r6[4], r6[5]]
    }

    pub fn from_flat9(v: &[T]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::ShapeMismatch(format!("pose row needs 9 values, got {}", v.len())));
        }
        Ok(Self { t: Vec3::new(v[0], v[1], v[2]), r: rot6d_to_matrix(&v[3..9])? })
    }

    pub fn cast<U: Scalar>(&self) -> SE3Pose<U> {
        SE3Pose {
            t: self.t.map(|v| U::lit(v.as_f64())),
            r: self.r.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Plain serializable pose used in config and manifest files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub translation: [f64; 3],
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
}

impl From<&SE3Pose<f64>> for PoseRecord {
    fn from(p: &SE3Pose<f64>) -> Self {
        let r = &p.r;
        Self {
            translation: [p.t[0], p.t[1], p.t[2]],
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
        }
    }
}

impl From<&PoseRecord> for SE3Pose<f64> {
    fn from(p: &PoseRecord) -> Self {
        let m = p.rotation;
        SE3Pose {
            t: Vec3::new(p.translation[0], p.translation[1], p.translation[2]),
            r: Mat3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
        }
    }
}
