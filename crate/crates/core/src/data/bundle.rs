//! Per-sequence container: a `manifest.toml` plus one raw little-endian
//! float32 file per array.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::conditioning::{ImageEmbeddingStream, SceneMap};
use crate::error::{Error, Result};
use crate::motion::{SE3Pose, Skeleton, Vec3};
use crate::scalar::Scalar;

pub const BUNDLE_FORMAT: &str = "hmd-bundle-v1";
const MANIFEST: &str = "manifest.toml";
const SKELETON_FILE: &str = "skeleton.toml";

pub const HEAD: &str = "head";
pub const ROTATIONS: &str = "rotations";
pub const IMAGES: &str = "images";
pub const SCENE: &str = "scene";
pub const CALIBRATION: &str = "calibration";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub file: String,
    pub shape: [usize; 2],
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub fps: u32,
    pub frames: usize,
    /// Index of row 0 within the sequence this bundle was cut from.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub start_frame: usize,
    pub skeleton: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub arrays: Vec<ArrayEntry>,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

/// One recorded (or synthesized) sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    /// Motion and head trajectory rate.
    pub fps: u32,
    /// Image embedding rate.
    pub image_fps: u32,
    /// Row 0 of every per-frame array is this frame of the source sequence.
    pub start_frame: usize,
    pub skeleton: Skeleton<f64>,
    pub scenario: Option<String>,
    /// `frames × 9`: translation and 6D rotation of the device.
    pub head: Array2<f32>,
    /// `frames × 138` ground-truth local rotations; absent for inference-only data.
    pub rotations: Option<Array2<f32>>,
    pub images: Array2<f32>,
    /// `points × 3`, world frame.
    pub scene: Array2<f32>,
    /// `1 × 9` device-to-head-joint offset.
    pub calibration: Array2<f32>,
}

impl SequenceBundle {
    pub fn frames(&self) -> usize {
        self.head.nrows()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps as f64
    }

    pub fn head_poses<T: Scalar>(&self) -> Result<Vec<SE3Pose<T>>> {
        self.head
            .rows()
            .into_iter()
            .map(|r| SE3Pose::from_flat9(&r.iter().map(|v| T::lit(*v as f64)).collect::<Vec<_>>()))
            .collect()
    }

    pub fn calibration_pose<T: Scalar>(&self) -> Result<SE3Pose<T>> {
        SE3Pose::from_flat9(&self.calibration.iter().map(|v| T::lit(*v as f64)).collect::<Vec<_>>())
    }

    pub fn scene_map<T: Scalar>(&self) -> SceneMap<T> {
        SceneMap::new(
            self.scene
                .rows()
                .into_iter()
                .map(|r| Vec3::new(T::lit(r[0] as f64), T::lit(r[1] as f64), T::lit(r[2] as f64)))
                .collect(),
        )
    }

    pub fn image_stream<T: Scalar>(&self) -> Result<ImageEmbeddingStream<T>> {
        ImageEmbeddingStream::new(self.images.mapv(|v| T::lit(v as f64)), self.image_fps as f64)
    }

    pub fn rotations_as<T: Scalar>(&self) -> Option<Array2<T>> {
        self.rotations.as_ref().map(|r| r.mapv(|v| T::lit(v as f64)))
    }

    fn validate(&self) -> Result<()> {
        let n = self.frames();
        if self.head.ncols() != 9 {
            return Err(Error::ShapeMismatch(format!("array `{HEAD}` has {} columns, expected 9", self.head.ncols())));
        }
        if let Some(r) = &self.rotations {
            if r.nrows() != n {
                return Err(Error::ShapeMismatch(format!("array `{ROTATIONS}` has {} rows for {n} frames", r.nrows())));
            }
        }
        if self.scene.ncols() != 3 {
            return Err(Error::ShapeMismatch(format!("array `{SCENE}` has {} columns, expected 3", self.scene.ncols())));
        }
        if self.calibration.dim() != (1, 9) {
            return Err(Error::ShapeMismatch(format!("array `{CALIBRATION}` must be 1×9")));
        }
        for fps in [self.fps, self.image_fps] {
            if fps != 30 && fps != 60 {
                return Err(Error::CorruptManifest(format!("unsupported rate {fps} fps")));
            }
        }
        Ok(())
    }
}

fn write_array(dir: &Path, name: &str, a: &Array2<f32>, fps: Option<u32>) -> Result<ArrayEntry> {
    let file = format!("{name}.f32");
    let bytes: Vec<u8> = a.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = dir.join(&file);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(ArrayEntry { name: name.into(), file, shape: [a.nrows(), a.ncols()], dtype: "f32le".into(), fps })
}

pub fn save_bundle(bundle: &SequenceBundle, dir: impl AsRef<Path>) -> Result<()> {
    bundle.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut arrays = vec![write_array(dir, HEAD, &bundle.head, Some(bundle.fps))?];
    if let Some(r) = &bundle.rotations {
        arrays.push(write_array(dir, ROTATIONS, r, Some(bundle.fps))?);
    }
    arrays.push(write_array(dir, IMAGES, &bundle.images, Some(bundle.image_fps))?);
    arrays.push(write_array(dir, SCENE, &bundle.scene, None)?);
    arrays.push(write_array(dir, CALIBRATION, &bundle.calibration, None)?);
    bundle.skeleton.save(dir.join(SKELETON_FILE))?;
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        fps: bundle.fps,
        frames: bundle.frames(),
        start_frame: bundle.start_frame,
        skeleton: SKELETON_FILE.into(),
        scenario: bundle.scenario.clone(),
        arrays,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_array(dir: &Path, entry: &ArrayEntry) -> Result<Array2<f32>> {
    if entry.dtype != "f32le" {
        return Err(Error::CorruptManifest(format!("array `{}` has dtype {}", entry.name, entry.dtype)));
    }
    let path = dir.join(&entry.file);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArray(entry.name.clone())),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let [r, c] = entry.shape;
    let expected = r.checked_mul(c).and_then(|n| n.checked_mul(4));
    if expected != Some(bytes.len()) {
        return Err(Error::ShapeMismatch(format!(
            "array `{}`: manifest shape {r}×{c} needs {} bytes, file has {}",
            entry.name,
            r * c * 4,
            bytes.len()
        )));
    }
    let values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Ok(Array2::from_shape_vec((r, c), values).expect("size checked"))
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::CorruptManifest(format!("no manifest in {}", dir.as_ref().display())))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    if m.format != BUNDLE_FORMAT {
        return Err(Error::CorruptManifest(format!("unknown format `{}`", m.format)));
    }
    Ok(m)
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<SequenceBundle> {
    let dir = dir.as_ref();
    let m = load_manifest(dir)?;
    let entry = |name: &str| m.arrays.iter().find(|a| a.name == name);
    let required = |name: &str| entry(name).ok_or_else(|| Error::CorruptManifest(format!("array `{name}` not listed")));
    let head = read_array(dir, required(HEAD)?)?;
    if head.nrows() != m.frames {
        return Err(Error::CorruptManifest(format!("`{HEAD}` has {} rows, manifest says {} frames", head.nrows(), m.frames)));
    }
    let rotations = entry(ROTATIONS).map(|e| read_array(dir, e)).transpose()?;
    let images_entry = required(IMAGES)?;
    let images = read_array(dir, images_entry)?;
    let bundle = SequenceBundle {
        fps: m.fps,
        image_fps: images_entry.fps.unwrap_or(30),
        start_frame: m.start_frame,
        skeleton: Skeleton::load(dir.join(&m.skeleton))?,
        scenario: m.scenario.clone(),
        head,
        rotations,
        images,
        scene: read_array(dir, required(SCENE)?)?,
        calibration: read_array(dir, required(CALIBRATION)?)?,
    };
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(with_rotations: bool) -> SequenceBundle {
        let f = |r: usize, c: usize, k: f32| Array2::from_shape_fn((r, c), |(i, j)| k * i as f32 - 0.37 * j as f32 + 1e-7);
        let mut head = Array2::zeros((4, 9));
        for i in 0..4 {
            head[[i, 2]] = 1.6;
            head[[i, 3]] = 1.0;
            head[[i, 7]] = 1.0;
        }
        SequenceBundle {
            fps: 60,
            image_fps: 30,
            start_frame: 0,
            skeleton: Skeleton::xsens23().scaled(0.93),
            scenario: Some("walk".into()),
            head,
            rotations: with_rotations.then(|| f(4, 138, 0.1)),
            images: f(2, 5, 3.3),
            scene: f(7, 3, -0.01),
            calibration: Array2::from_shape_vec((1, 9), vec![0.1, 0.0, 0.05, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let b = sample(true);
        save_bundle(&b, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back, b);
        let bits = |a: &Array2<f32>| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.rotations.as_ref().unwrap()), bits(b.rotations.as_ref().unwrap()));
    }

    #[test]
    fn inference_only_bundle() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(false), dir.path()).unwrap();
        assert!(load_bundle(dir.path()).unwrap().rotations.is_none());
    }

    #[test]
    fn every_truncation_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(true), dir.path()).unwrap();
        for name in [HEAD, ROTATIONS, IMAGES, SCENE, CALIBRATION] {
            let path = dir.path().join(format!("{name}.f32"));
            let orig = fs::read(&path).unwrap();
            for cut in 1..=orig.len() {
                fs::write(&path, &orig[..orig.len() - cut]).unwrap();
                match load_bundle(dir.path()) {
                    Err(Error::ShapeMismatch(msg)) => assert!(msg.contains(name), "{msg}"),
                    other => panic!("{name} cut {cut}: {other:?}"),
                }
            }
            fs::write(&path, &orig).unwrap();
        }
        // one extra byte as well
        let path = dir.path().join("scene.f32");
        let mut grown = fs::read(&path).unwrap();
        grown.push(0);
        fs::write(&path, grown).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn missing_file_and_bad_manifest() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(true), dir.path()).unwrap();
        fs::remove_file(dir.path().join("images.f32")).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::MissingArray(n)) if n == IMAGES));
        fs::write(dir.path().join(MANIFEST), "format = 3").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::CorruptManifest(_))));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(empty.path()), Err(Error::CorruptManifest(_))));
    }
}
