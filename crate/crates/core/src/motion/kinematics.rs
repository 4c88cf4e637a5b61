//! Forward kinematics, motion windows and stitching onto the head trajectory.

use ndarray::{Array2, Array3, ArrayView1};

use super::pose::SE3Pose;
use super::rotation::{matrix_to_rot6d_unchecked, rot6d_to_matrix, Mat3, Vec3};
use super::skeleton::{Skeleton, JOINT_COUNT};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Motion feature width: six numbers per joint.
pub const FEATURE_DIM: usize = JOINT_COUNT * 6;

/// `frames × (23·6)` local joint rotations in 6D form.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionWindow<T: Scalar> {
    pub data: Array2<T>,
}

impl<T: Scalar> MotionWindow<T> {
    pub fn new(data: Array2<T>) -> Result<Self> {
        if data.ncols() != FEATURE_DIM {
            return Err(Error::ShapeMismatch(format!(
                "motion window needs {FEATURE_DIM} columns, got {}",
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("motion window has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(frames: usize) -> Self {
        Self { data: Array2::zeros((frames, FEATURE_DIM)) }
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn from_rotations(rots: &[Vec<Mat3<T>>]) -> Self {
        let mut data = Array2::zeros((rots.len(), FEATURE_DIM));
        for (f, frame) in rots.iter().enumerate() {
            for (j, r) in frame.iter().enumerate() {
                let r6 = matrix_to_rot6d_unchecked(r);
                for k in 0..6 {
                    data[[f, j * 6 + k]] = r6[k];
                }
            }
        }
        Self { data }
    }

    pub fn frame_rotations(&self, frame: usize) -> Result<Vec<Mat3<T>>> {
        row_rotations(self.data.row(frame))
    }
}

/// Decode one feature row into 23 rotation matrices.
pub fn row_rotations<T: Scalar>(row: ArrayView1<T>) -> Result<Vec<Mat3<T>>> {
    if row.len() != FEATURE_DIM {
        return Err(Error::ShapeMismatch(format!("feature row has {} values", row.len())));
    }
    let v: Vec<T> = row.iter().copied().collect();
    v.chunks(6).map(rot6d_to_matrix).collect()
}

/// Joint positions and global orientations from local rotations.
pub fn forward_kinematics_full<T: Scalar>(
    skeleton: &Skeleton<T>,
    local_rots: &[Mat3<T>],
    root: &SE3Pose<T>,
) -> (Vec<Vec3<T>>, Vec<Mat3<T>>) {
    let n = skeleton.joint_count();
    assert_eq!(local_rots.len(), n, "one local rotation per joint");
    let mut pos = vec![Vec3::zeros(); n];
    let mut glob = vec![Mat3::identity(); n];
    pos[0] = root.t;
    glob[0] = root.r * local_rots[0];
    for j in 1..n {
        let p = skeleton.parent[j].expect("non-root has parent");
        pos[j] = pos[p] + glob[p] * skeleton.offset[j];
        glob[j] = glob[p] * local_rots[j];
    }
    (pos, glob)
}

pub fn forward_kinematics<T: Scalar>(
    skeleton: &Skeleton<T>,
    local_rots: &[Mat3<T>],
    root: &SE3Pose<T>,
) -> Vec<Vec3<T>> {
    forward_kinematics_full(skeleton, local_rots, root).0
}

/// Global motion: per-frame root transform and joint world positions.
#[derive(Debug, Clone)]
pub struct WorldMotion<T: Scalar> {
    pub root: Vec<SE3Pose<T>>,
    /// `frames × joints × 3`, meters.
    pub positions: Array3<T>,
}

impl<T: Scalar> WorldMotion<T> {
    pub fn frames(&self) -> usize {
        self.positions.shape()[0]
    }

    pub fn joint(&self, frame: usize, joint: usize) -> Vec3<T> {
        Vec3::new(
            self.positions[[frame, joint, 0]],
            self.positions[[frame, joint, 1]],
            self.positions[[frame, joint, 2]],
        )
    }

    /// Frame sub-range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            root: self.root[start..end].to_vec(),
            positions: self.positions.slice(ndarray::s![start..end, .., ..]).to_owned(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> WorldMotion<U> {
        WorldMotion {
            root: self.root.iter().map(|p| p.cast()).collect(),
            positions: self.positions.mapv(|v| U::lit(v.as_f64())),
        }
    }
}

/// Place the body so its head joint follows `head_traj[i] ∘ calib` exactly.
///
/// The root transform is solved in closed form per frame:
/// `root = (head_traj[i] ∘ calib) ∘ head_rel⁻¹`, where `head_rel` is the
/// head joint pose produced by FK with an identity root.
pub fn stitch_to_head<T: Scalar>(
    motion: &MotionWindow<T>,
    head_traj: &[SE3Pose<T>],
    skeleton: &Skeleton<T>,
    calib: &SE3Pose<T>,
) -> Result<WorldMotion<T>> {
    let frames = motion.frames();
    if head_traj.len() != frames {
        return Err(Error::LengthMismatch(format!(
            "motion has {frames} frames, head trajectory {}",
            head_traj.len()
        )));
    }
    let n = skeleton.joint_count();
    let mut positions = Array3::zeros((frames, n, 3));
    let mut roots = Vec::with_capacity(frames);
    for (f, head) in head_traj.iter().enumerate() {
        let rots = motion.frame_rotations(f)?;
        let (rel_pos, rel_rot) = forward_kinematics_full(skeleton, &rots, &SE3Pose::identity());
        let head_rel = SE3Pose::new(rel_pos[skeleton.head], rel_rot[skeleton.head]);
        let target = head.compose(calib);
        let root = target.compose(&head_rel.inverse());
        for (j, p) in rel_pos.iter().enumerate() {
            let w = root.apply(p);
            for k in 0..3 {
                positions[[f, j, k]] = w[k];
            }
        }
        roots.push(root);
    }
    Ok(WorldMotion { root: roots, positions })
}

/// World head-joint pose implied by a stitched frame.
pub fn head_joint_pose<T: Scalar>(
    skeleton: &Skeleton<T>,
    motion: &MotionWindow<T>,
    world: &WorldMotion<T>,
    frame: usize,
) -> Result<SE3Pose<T>> {
    let rots = motion.frame_rotations(frame)?;
    let (pos, glob) = forward_kinematics_full(skeleton, &rots, &world.root[frame]);
    Ok(SE3Pose::new(pos[skeleton.head], glob[skeleton.head]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::rotation::{exp_so3, rot_x, rot_z};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M4 = nalgebra::Matrix4<f64>;

    fn homogeneous(r: &Mat3<f64>, t: &Vec3<f64>) -> M4 {
        let mut m = M4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
        m
    }

    /// Independent oracle: multiply 4×4 matrices along each joint's ancestor chain.
    fn matrix_chain_fk(sk: &Skeleton<f64>, rots: &[Mat3<f64>], root: &SE3Pose<f64>) -> Vec<Vec3<f64>> {
        (0..sk.joint_count())
            .map(|j| {
                let mut chain = vec![j];
                while let Some(p) = sk.parent[*chain.last().unwrap()] {
                    chain.push(p);
                }
                let mut m = homogeneous(&root.r, &root.t);
                for &k in chain.iter().rev() {
                    m *= homogeneous(&rots[k], &sk.offset[k]);
                }
                Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
            })
            .collect()
    }

    fn random_rot(rng: &mut ChaCha8Rng) -> Mat3<f64> {
        let w = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        exp_so3(&w)
    }

    #[test]
    fn identity_rotations_give_rest_pose() {
        let sk = Skeleton::xsens23();
        let rots = vec![Mat3::identity(); JOINT_COUNT];
        let pos = forward_kinematics(&sk, &rots, &SE3Pose::identity());
        assert_eq!(pos, sk.rest_positions());
        let shifted = forward_kinematics(&sk, &rots, &SE3Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)));
        for (a, b) in shifted.iter().zip(&pos) {
            assert!((a - b - Vec3::new(1.0, 0.0, 0.0)).iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn elbow_rotation_matches_matrix_chain() {
        let sk = Skeleton::xsens23();
        let mut rots = vec![Mat3::identity(); JOINT_COUNT];
        rots[sk.index_of("RightForeArm").unwrap()] = rot_z(std::f64::consts::FRAC_PI_2);
        let root = SE3Pose::identity();
        let a = forward_kinematics(&sk, &rots, &root);
        let b = matrix_chain_fk(&sk, &rots, &root);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn random_fk_matches_matrix_chain() {
        let sk = Skeleton::xsens23().scaled(1.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let rots: Vec<_> = (0..JOINT_COUNT).map(|_| random_rot(&mut rng)).collect();
            let root = SE3Pose::new(Vec3::new(rng.random(), rng.random(), rng.random()), random_rot(&mut rng));
            let a = forward_kinematics(&sk, &rots, &root);
            let b = matrix_chain_fk(&sk, &rots, &root);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).iter().all(|v| v.abs() < 1e-9));
            }
            assert_eq!(a[0], root.t);
        }
    }

    #[test]
    fn stitch_matches_head_target_every_frame() {
        let sk = Skeleton::xsens23();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frames = 20;
        let rots: Vec<Vec<Mat3<f64>>> =
            (0..frames).map(|_| (0..JOINT_COUNT).map(|_| random_rot(&mut rng)).collect()).collect();
        let motion = MotionWindow::from_rotations(&rots);
        let traj: Vec<_> = (0..frames)
            .map(|_| SE3Pose::new(Vec3::new(rng.random(), rng.random(), rng.random()), random_rot(&mut rng)))
            .collect();
        let calib = SE3Pose::new(Vec3::new(-0.08, 0.0, -0.1), rot_x(0.05));
        let world = stitch_to_head(&motion, &traj, &sk, &calib).unwrap();
        for f in 0..frames {
            let got = head_joint_pose(&sk, &motion, &world, f).unwrap();
            let want = traj[f].compose(&calib);
            assert!((got.t - want.t).iter().all(|v| v.abs() < 1e-6));
            assert!((got.r - want.r).iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn stitch_rigid_shift() {
        let sk = Skeleton::xsens23();
        let motion = MotionWindow::from_rotations(&[vec![Mat3::identity(); JOINT_COUNT]]);
        let head = SE3Pose::from_translation(sk.rest_positions()[sk.head]);
        let w0 = stitch_to_head(&motion, &[head], &sk, &SE3Pose::identity()).unwrap();
        assert!(w0.root[0].t.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(w0.root[0].r, Mat3::identity());
        let raised = SE3Pose::from_translation(head.t + Vec3::new(0.0, 0.0, 0.1));
        let w1 = stitch_to_head(&motion, &[raised], &sk, &SE3Pose::identity()).unwrap();
        for j in 0..JOINT_COUNT {
            let d = w1.joint(0, j) - w0.joint(0, j);
            assert!((d - Vec3::new(0.0, 0.0, 0.1)).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn stitch_rejects_length_mismatch() {
        let sk = Skeleton::xsens23();
        let motion = MotionWindow::<f64>::zeros(3);
        assert!(matches!(
            stitch_to_head(&motion, &[SE3Pose::identity()], &sk, &SE3Pose::identity()),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn stitch_propagates_degenerate_rotation() {
        let sk = Skeleton::xsens23();
        let motion = MotionWindow::<f64>::zeros(1);
        assert!(matches!(
            stitch_to_head(&motion, &[SE3Pose::identity()], &sk, &SE3Pose::identity()),
            Err(Error::DegenerateRotation(_))
        ));
    }
}
