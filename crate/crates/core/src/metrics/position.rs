//! Joint position errors in centimeters.

use crate::error::{Error, Result};
use crate::motion::{Skeleton, WorldMotion};

fn check(pred: &WorldMotion<f64>, gt: &WorldMotion<f64>) -> Result<()> {
    if pred.positions.shape() != gt.positions.shape() {
        return Err(Error::LengthMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.positions.shape(),
            gt.positions.shape()
        )));
    }
    Ok(())
}

/// Mean error over `joints` for every frame, cm.
pub fn per_frame_error(pred: &WorldMotion<f64>, gt: &WorldMotion<f64>, joints: &[usize]) -> Result<Vec<f64>> {
    check(pred, gt)?;
    if joints.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok((0..pred.frames())
        .map(|f| {
            joints.iter().map(|&j| (pred.joint(f, j) - gt.joint(f, j)).norm()).sum::<f64>() / joints.len() as f64 * 100.0
        })
        .collect())
}

/// Mean position error over frames and `joints`, cm.
pub fn region_pe(pred: &WorldMotion<f64>, gt: &WorldMotion<f64>, joints: &[usize]) -> Result<f64> {
    let e = per_frame_error(pred, gt, joints)?;
    if e.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Joint subsets used by the position metrics.
#[derive(Debug, Clone)]
pub struct JointSets {
    /// Every joint except the head, which follows the device exactly.
    pub body: Vec<usize>,
    pub hands: Vec<usize>,
    pub upper: Vec<usize>,
    pub lower: Vec<usize>,
}

impl JointSets {
    pub fn new(skeleton: &Skeleton<f64>) -> Self {
        let pick = |mask: &[bool]| mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
        Self {
            body: (0..skeleton.joint_count()).filter(|&j| j != skeleton.head).collect(),
            hands: skeleton.wrists.to_vec(),
            upper: pick(&skeleton.upper_body),
            lower: pick(&skeleton.lower_body),
        }
    }
}

/// MPJPE over all joints but the head, cm.
pub fn mpjpe(pred: &WorldMotion<f64>, gt: &WorldMotion<f64>, skeleton: &Skeleton<f64>) -> Result<f64> {
    region_pe(pred, gt, &JointSets::new(skeleton).body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{forward_kinematics, SE3Pose, Vec3};
    use ndarray::Array3;

    fn rest(frames: usize) -> (Skeleton<f64>, WorldMotion<f64>) {
        let sk = Skeleton::xsens23();
        let rots = vec![crate::motion::Mat3::identity(); 23];
        let root = SE3Pose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let p = forward_kinematics(&sk, &rots, &root);
        let positions = Array3::from_shape_fn((frames, 23, 3), |(_, j, k)| p[j][k]);
        (sk, WorldMotion { root: vec![root; frames], positions })
    }

    #[test]
    fn arithmetic_cases() {
        let (sk, gt) = rest(4);
        assert_eq!(mpjpe(&gt, &gt, &sk).unwrap(), 0.0);
        let mut one = gt.clone();
        for f in 0..4 {
            one.positions[[f, 3, 0]] += 0.023;
        }
        assert!((mpjpe(&one, &gt, &sk).unwrap() - 2.3 / 22.0).abs() < 1e-12);
        let mut all = gt.clone();
        for f in 0..4 {
            for j in 0..23 {
                if j != sk.head {
                    all.positions[[f, j, 2]] += 0.01;
                }
            }
        }
        assert!((mpjpe(&all, &gt, &sk).unwrap() - 1.0).abs() < 1e-12);
        let sets = JointSets::new(&sk);
        let mut wrist = gt.clone();
        for f in 0..4 {
            wrist.positions[[f, sk.wrists[0], 1]] += 0.02;
        }
        assert!((region_pe(&wrist, &gt, &sets.hands).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(region_pe(&gt, &gt, &sets.hands).unwrap(), 0.0);
        assert!(matches!(mpjpe(&gt.slice(0, 3), &gt, &sk), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn masks_partition_the_body() {
        let sk = Skeleton::xsens23();
        let sets = JointSets::new(&sk);
        let mut all: Vec<usize> = sets.upper.iter().chain(&sets.lower).copied().chain([sk.head, 0]).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(sets.upper.iter().all(|j| !sets.lower.contains(j)));
    }
}
