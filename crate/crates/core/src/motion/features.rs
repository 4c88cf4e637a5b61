//! Head pose features: finite-difference velocities and per-window
//! canonicalization (first-frame translation and heading removed).

use ndarray::Array2;

use super::pose::SE3Pose;
use super::rotation::{log_so3, matrix_to_rot6d_unchecked, Vec3};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-frame head feature width: translation 3, 6D rotation 6, linear and
/// angular velocity 3 each.
pub const HEAD_FEATURE_DIM: usize = 15;

#[derive(Debug, Clone)]
pub struct HeadFeatureWindow<T: Scalar> {
    /// `frames × 15`: `[t | r6 | v | ω]`.
    pub frames: Array2<T>,
    /// World pose of the first frame's heading frame (yaw + translation).
    pub anchor: SE3Pose<T>,
    pub dt: T,
}

impl<T: Scalar> HeadFeatureWindow<T> {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

/// Central differences on interior frames, one-sided at the two ends.
/// Angular velocity is the log map of the relative rotation, in the body frame.
pub fn finite_diff_velocities<T: Scalar>(
    poses: &[SE3Pose<T>],
    dt: T,
) -> Result<(Vec<Vec3<T>>, Vec<Vec3<T>>)> {
    let n = poses.len();
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    if !(dt > T::zero()) {
        return Err(Error::BadConfig(format!("dt must be positive, got {:?}", dt)));
    }
    let mut v = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        let span = dt * T::lit((b - a) as f64);
        v.push((poses[b].t - poses[a].t) / span);
        w.push(log_so3(&(poses[a].r.transpose() * poses[b].r)) / span);
    }
    Ok((v, w))
}

/// Express every pose relative to the heading frame of the first pose.
/// Pitch and roll of each pose are kept so gravity stays along Z.
pub fn canonicalize_poses<T: Scalar>(poses: &[SE3Pose<T>]) -> (Vec<SE3Pose<T>>, SE3Pose<T>) {
    let anchor = match poses.first() {
        Some(p0) => SE3Pose::from_yaw(p0.t, p0.yaw()),
        None => SE3Pose::identity(),
    };
    let inv = anchor.inverse();
    (poses.iter().map(|p| inv.compose(p)).collect(), anchor)
}

pub fn canonicalize_window<T: Scalar>(
    poses: &[SE3Pose<T>],
    dt: T,
) -> Result<(HeadFeatureWindow<T>, SE3Pose<T>)> {
    if poses.is_empty() {
        return Err(Error::TooShort { need: 1, got: 0 });
    }
    for p in poses {
        p.validate()?;
    }
    let (canon, anchor) = canonicalize_poses(poses);
    let (v, w) = if canon.len() >= 2 {
        finite_diff_velocities(&canon, dt)?
    } else {
        (vec![Vec3::zeros()], vec![Vec3::zeros()])
    };
    let mut frames = Array2::zeros((canon.len(), HEAD_FEATURE_DIM));
    for (i, p) in canon.iter().enumerate() {
        let r6 = matrix_to_rot6d_unchecked(&p.r);
        let row = [
            p.t[0], p.t[1], p.t[2], r6[0], r6[1], r6[2], r6[3], r6[4], r6[5], v[i][0], v[i][1],
            v[i][2], w[i][0], w[i][1], w[i][2],
        ];
        for (k, x) in row.into_iter().enumerate() {
            frames[[i, k]] = x;
        }
    }
    Ok((HeadFeatureWindow { frames, anchor, dt }, anchor))
}
