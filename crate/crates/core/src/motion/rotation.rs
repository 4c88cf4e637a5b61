//! Rotation parameterizations: the continuous 6D form (first two matrix
//! columns), axis-angle maps, and elementary axis rotations.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Vec3<T> = Vector3<T>;
pub type Mat3<T> = Matrix3<T>;

/// Six numbers: first column then second column of a rotation matrix.
pub type Rot6<T> = [T; 6];

pub fn norm3<T: Scalar>(v: &Vec3<T>) -> T {
    v.dot(v).sqrt()
}

pub fn det3<T: Scalar>(m: &Mat3<T>) -> T {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error<T: Scalar>(m: &Mat3<T>) -> T {
    let g = m.transpose() * m - Mat3::identity();
    g.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn is_rotation<T: Scalar>(m: &Mat3<T>, tol: f64) -> bool {
    let tol = T::lit(tol);
    m.iter().all(|v| v.is_finite())
        && orthonormality_error(m) <= tol
        && (det3(m) - T::one()).abs() <= tol
}

/// Gram–Schmidt completion of two 3-vectors into a right-handed rotation.
pub fn rot6d_to_matrix<T: Scalar>(r6: &[T]) -> Result<Mat3<T>> {
    if r6.len() != 6 {
        return Err(Error::ShapeMismatch(format!("6D rotation needs 6 values, got {}", r6.len())));
    }
    if r6.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateRotation("non-finite component".into()));
    }
    let a1 = Vec3::new(r6[0], r6[1], r6[2]);
    let a2 = Vec3::new(r6[3], r6[4], r6[5]);
    let eps = T::lit(1e-8);
    let n1 = norm3(&a1);
    let n2 = norm3(&a2);
    if n1 < eps || n2 < eps {
        return Err(Error::DegenerateRotation("near-zero column".into()));
    }
    if norm3(&a1.cross(&a2)) < eps * n1 * n2 {
        return Err(Error::DegenerateRotation("parallel columns".into()));
    }
    let b1 = a1 / n1;
    let u2 = a2 - b1 * b1.dot(&a2);
    let b2 = u2 / norm3(&u2);
    let b3 = b1.cross(&b2);
    Ok(Mat3::from_columns(&[b1, b2, b3]))
}

pub fn matrix_to_rot6d<T: Scalar>(r: &Mat3<T>) -> Result<Rot6<T>> {
    if !is_rotation(r, 1e-6) {
        return Err(Error::NotARotation(format!(
            "orthonormality error {:e}, det {:e}",
            orthonormality_error(r).as_f64(),
            det3(r).as_f64()
        )));
    }
    Ok(matrix_to_rot6d_unchecked(r))
}

pub(crate) fn matrix_to_rot6d_unchecked<T: Scalar>(r: &Mat3<T>) -> Rot6<T> {
    [r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]]
}

pub fn rot_x<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    Mat3::new(l, o, o, o, c, -s, o, s, c)
}

pub fn rot_y<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    Mat3::new(c, o, s, o, l, o, -s, o, c)
}

pub fn rot_z<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    Mat3::new(c, -s, o, s, c, o, o, o, l)
}

/// Heading angle about world Z of the rotation's forward (first) axis.
pub fn yaw_of<T: Scalar>(r: &Mat3<T>) -> T {
    r[(1, 0)].atan2(r[(0, 0)])
}

fn skew<T: Scalar>(w: &Vec3<T>) -> Mat3<T> {
    let o = T::zero();
    Mat3::new(o, -w[2], w[1], w[2], o, -w[0], -w[1], w[0], o)
}

/// Rodrigues formula: rotation vector to matrix.
pub fn exp_so3<T: Scalar>(w: &Vec3<T>) -> Mat3<T> {
    let theta = norm3(w);
    let k = skew(w);
    let (a, b) = if theta < T::lit(1e-6) {
        let t2 = theta * theta;
        (T::one() - t2 / T::lit(6.0), T::lit(0.5) - t2 / T::lit(24.0))
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / (theta * theta))
    };
    Mat3::identity() + k * a + k * k * b
}

/// Inverse of [`exp_so3`]; returns the rotation vector with angle in `[0, π]`.
pub fn log_so3<T: Scalar>(r: &Mat3<T>) -> Vec3<T> {
    let two = T::lit(2.0);
    let cos = ((r.trace() - T::one()) / two).max(-T::one()).min(T::one());
    let theta = cos.acos();
    let v = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < T::lit(1e-6) {
        // first-order: R ≈ I + [w]x
        return v / two * (T::one() + theta * theta / T::lit(6.0));
    }
    if T::PI() - theta > T::lit(1e-4) {
        return v * (theta / (two * theta.sin()));
    }
    // near π: axis from the symmetric part, sign from the skew part
    let b = (r + r.transpose()) / two - Mat3::identity() * cos;
    let mut best = 0;
    for i in 1..3 {
        if b[(i, i)] > b[(best, best)] {
            best = i;
        }
    }
    let mut axis = b.column(best).into_owned();
    axis /= norm3(&axis);
    if axis.dot(&v) < T::zero() {
        axis = -axis;
    }
    axis * theta
}

/// Re-orthonormalize an arbitrary 6-vector, falling back to identity when it
/// is degenerate. Used for averaged poses where degeneracy is measure-zero.
pub fn rot6d_to_matrix_or_identity<T: Scalar>(r6: &[T]) -> Mat3<T> {
    rot6d_to_matrix(r6).unwrap_or_else(|_| Mat3::identity())
}
