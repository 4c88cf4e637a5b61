//! Skeletal motion: rotations, poses, skeleton, forward kinematics, head
//! features and stitching.

pub mod features;
pub mod kinematics;
pub mod pose;
pub mod rotation;
pub mod skeleton;

pub use features::{canonicalize_poses, canonicalize_window, finite_diff_velocities, HeadFeatureWindow, HEAD_FEATURE_DIM};
pub use kinematics::{forward_kinematics, forward_kinematics_full, stitch_to_head, MotionWindow, WorldMotion, FEATURE_DIM};
pub use pose::{PoseRecord, SE3Pose};
pub use rotation::{matrix_to_rot6d, rot6d_to_matrix, Mat3, Rot6, Vec3};
pub use skeleton::{Skeleton, JOINT_COUNT};
