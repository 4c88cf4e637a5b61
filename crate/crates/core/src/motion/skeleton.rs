//! Joint hierarchy loaded from a versioned text asset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rotation::Vec3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const JOINT_COUNT: usize = 23;
pub const SKELETON_VERSION: u32 = 1;

const DEFAULT_ASSET: &str = include_str!("../../assets/skeleton_xsens23.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub offset: [f64; 3],
}

/// On-disk form of a skeleton.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub version: u32,
    pub name: String,
    pub head: String,
    pub wrists: [String; 2],
    pub feet: Vec<String>,
    pub joints: Vec<JointRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton<T: Scalar> {
    pub name: String,
    pub names: Vec<String>,
    /// `None` only for the root (pelvis).
    pub parent: Vec<Option<usize>>,
    pub offset: Vec<Vec3<T>>,
    pub head: usize,
    pub wrists: [usize; 2],
    pub feet: Vec<usize>,
    pub upper_body: Vec<bool>,
    pub lower_body: Vec<bool>,
}

impl Skeleton<f64> {
    /// The shipped 23-joint asset.
    pub fn xsens23() -> Self {
        Self::from_toml_str(DEFAULT_ASSET).expect("bundled skeleton asset is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SkeletonFile =
            toml::from_str(text).map_err(|e| Error::InvalidSkeleton(e.to_string()))?;
        Self::from_file_record(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(&self.to_file_record())
            .map_err(|e| Error::InvalidSkeleton(e.to_string()))?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn from_file_record(file: &SkeletonFile) -> Result<Self> {
        if file.version != SKELETON_VERSION {
            return Err(Error::InvalidSkeleton(format!("unsupported version {}", file.version)));
        }
        if file.joints.len() != JOINT_COUNT {
            return Err(Error::InvalidSkeleton(format!(
                "expected {JOINT_COUNT} joints, got {}",
                file.joints.len()
            )));
        }
        let names: Vec<String> = file.joints.iter().map(|j| j.name.clone()).collect();
        let index = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::InvalidSkeleton(format!("unknown joint `{n}`")))
        };
        let mut parent = Vec::with_capacity(JOINT_COUNT);
        for (i, j) in file.joints.iter().enumerate() {
            match &j.parent {
                None => parent.push(None),
                Some(p) => {
                    let pi = index(p)?;
                    // parents precede children so FK is a single forward pass
                    if pi >= i {
                        return Err(Error::InvalidSkeleton(format!(
                            "parent `{p}` must be listed before `{}`",
                            j.name
                        )));
                    }
                    parent.push(Some(pi));
                }
            }
        }
        if parent[0].is_some() || parent.iter().skip(1).any(|p| p.is_none()) {
            return Err(Error::InvalidSkeleton("exactly one root, listed first".into()));
        }
        let offset: Vec<Vec3<f64>> =
            file.joints.iter().map(|j| Vec3::new(j.offset[0], j.offset[1], j.offset[2])).collect();
        if offset.iter().any(|o| !o.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidSkeleton("non-finite offset".into()));
        }
        let head = index(&file.head)?;
        let wrists = [index(&file.wrists[0])?, index(&file.wrists[1])?];
        let feet = file.feet.iter().map(|f| index(f)).collect::<Result<Vec<_>>>()?;
        let mut sk = Skeleton {
            name: file.name.clone(),
            names,
            parent,
            offset,
            head,
            wrists,
            feet,
            upper_body: vec![false; JOINT_COUNT],
            lower_body: vec![false; JOINT_COUNT],
        };
        sk.derive_body_masks();
        Ok(sk)
    }

    pub fn to_file_record(&self) -> SkeletonFile {
        SkeletonFile {
            version: SKELETON_VERSION,
            name: self.name.clone(),
            head: self.names[self.head].clone(),
            wrists: [self.names[self.wrists[0]].clone(), self.names[self.wrists[1]].clone()],
            feet: self.feet.iter().map(|&f| self.names[f].clone()).collect(),
            joints: (0..JOINT_COUNT)
                .map(|i| JointRecord {
                    name: self.names[i].clone(),
                    parent: self.parent[i].map(|p| self.names[p].clone()),
                    offset: [self.offset[i][0], self.offset[i][1], self.offset[i][2]],
                })
                .collect(),
        }
    }
}

impl<T: Scalar> Skeleton<T> {
    pub fn joint_count(&self) -> usize {
        self.parent.len()
    }

    /// Rest-pose (all identity rotations) joint positions relative to the root.
    pub fn rest_positions(&self) -> Vec<Vec3<T>> {
        let mut pos = vec![Vec3::zeros(); self.joint_count()];
        for j in 1..self.joint_count() {
            let p = self.parent[j].expect("non-root has parent");
            pos[j] = pos[p] + self.offset[j];
        }
        pos
    }

    /// Upper body: strictly above the pelvis in the T-pose; lower body: at or
    /// below it. Root and head belong to neither.
    fn derive_body_masks(&mut self) {
        let rest = self.rest_positions();
        let root_z = rest[0][2];
        for j in 0..self.joint_count() {
            if j == 0 || j == self.head {
                continue;
            }
            if rest[j][2] > root_z {
                self.upper_body[j] = true;
            } else {
                self.lower_body[j] = true;
            }
        }
    }

    /// Uniformly scale every bone.
    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.offset.iter_mut().for_each(|o| *o *= s);
        out
    }

    pub fn cast<U: Scalar>(&self) -> Skeleton<U> {
        Skeleton {
            name: self.name.clone(),
            names: self.names.clone(),
            parent: self.parent.clone(),
            offset: self.offset.iter().map(|o| o.map(|v| U::lit(v.as_f64()))).collect(),
            head: self.head,
            wrists: self.wrists,
            feet: self.feet.clone(),
            upper_body: self.upper_body.clone(),
            lower_body: self.lower_body.clone(),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_asset_loads() {
        let sk = Skeleton::xsens23();
        assert_eq!(sk.joint_count(), JOINT_COUNT);
        assert_eq!(sk.names[sk.head], "Head");
        assert_eq!(sk.wrists.map(|w| sk.names[w].as_str()), ["RightHand", "LeftHand"]);
    }

    #[test]
    fn body_masks_partition_joints() {
        let sk = Skeleton::xsens23();
        for j in 0..JOINT_COUNT {
            let special = j == 0 || j == sk.head;
            let count = sk.upper_body[j] as u8 + sk.lower_body[j] as u8 + special as u8;
            assert_eq!(count, 1, "joint {} in exactly one group", sk.names[j]);
        }
        assert!(sk.lower_body[sk.index_of("RightUpperLeg").unwrap()]);
        assert!(sk.upper_body[sk.index_of("LeftHand").unwrap()]);
    }

    #[test]
    fn text_round_trip() {
        let sk = Skeleton::xsens23().scaled(1.07);
        let text = toml::to_string(&sk.to_file_record()).unwrap();
        let back = Skeleton::from_toml_str(&text).unwrap();
        assert_eq!(back.parent, sk.parent);
        assert_eq!(back.offset, sk.offset);
    }

    #[test]
    fn rejects_wrong_joint_count() {
        let mut rec = Skeleton::xsens23().to_file_record();
        rec.joints.pop();
        assert!(matches!(Skeleton::from_file_record(&rec), Err(Error::InvalidSkeleton(_))));
    }

    #[test]
    fn rejects_child_before_parent() {
        let mut rec = Skeleton::xsens23().to_file_record();
        rec.joints.swap(1, 2);
        assert!(Skeleton::from_file_record(&rec).is_err());
    }
}
