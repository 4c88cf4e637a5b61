//! Checkpoint directory: `manifest.toml` (format tag, kind, step, config,
//! tensor inventory) plus `params.bin` holding little-endian floats.

use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "hmd-checkpoint-v1";
const MANIFEST: &str = "manifest.toml";
const DATA: &str = "params.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset into the data file, in elements.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub kind: String,
    pub step: u64,
    pub dtype: String,
    pub data: String,
    pub config: toml::Table,
    pub tensors: Vec<TensorEntry>,
}

fn dtype_of<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn save_checkpoint<T: Scalar, C: Serialize>(
    dir: impl AsRef<Path>,
    kind: &str,
    step: u64,
    config: &C,
    params: &ParamSet<T>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = toml::Table::try_from(config).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    let mut tensors = Vec::with_capacity(params.len());
    let mut bytes = Vec::with_capacity(params.count() * std::mem::size_of::<T>());
    let mut offset = 0;
    for (name, t) in params.names.iter().zip(&params.tensors) {
        tensors.push(TensorEntry { name: name.clone(), shape: [t.nrows(), t.ncols()], offset });
        offset += t.len();
        for v in t.iter() {
            if dtype_of::<T>() == "f32" {
                bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            } else {
                bytes.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        kind: kind.into(),
        step,
        dtype: dtype_of::<T>().into(),
        data: DATA.into(),
        config,
        tensors,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST), text).map_err(|e| Error::io(dir.join(MANIFEST), e))?;
    std::fs::write(dir.join(DATA), bytes).map_err(|e| Error::io(dir.join(DATA), e))
}

/// Load parameters (converted to `T`) and the stored config.
pub fn load_checkpoint<T: Scalar, C: DeserializeOwned>(
    dir: impl AsRef<Path>,
    expected_kind: &str,
) -> Result<(CheckpointManifest, C, ParamSet<T>)> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join(MANIFEST)).map_err(|e| Error::io(dir.join(MANIFEST), e))?;
    let manifest: CheckpointManifest =
        toml::from_str(&text).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::CorruptManifest(format!("unknown format `{}`", manifest.format)));
    }
    if manifest.kind != expected_kind {
        return Err(Error::CorruptManifest(format!(
            "checkpoint kind `{}`, expected `{expected_kind}`",
            manifest.kind
        )));
    }
    let width = match manifest.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::CorruptManifest(format!("unknown dtype `{other}`"))),
    };
    let config: C = manifest
        .config
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::CorruptManifest(e.to_string()))?;
    let path = dir.join(&manifest.data);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let total: usize = manifest.tensors.iter().map(|t| t.shape[0] * t.shape[1]).sum();
    if bytes.len() != total * width {
        return Err(Error::ShapeMismatch(format!(
            "{}: expected {} bytes, found {}",
            manifest.data,
            total * width,
            bytes.len()
        )));
    }
    let mut params = ParamSet::default();
    for t in &manifest.tensors {
        let n = t.shape[0] * t.shape[1];
        let start = t.offset * width;
        let end = start + n * width;
        if end > bytes.len() {
            return Err(Error::ShapeMismatch(format!("tensor `{}` out of range", t.name)));
        }
        let data: Vec<T> = bytes[start..end]
            .chunks_exact(width)
            .map(|c| {
                if width == 4 {
                    T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                } else {
                    T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))
                }
            })
            .collect();
        let arr = Array2::from_shape_vec((t.shape[0], t.shape[1]), data)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        params.push(t.name.clone(), arr);
    }
    Ok((manifest, config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Cfg {
        width: usize,
    }

    #[test]
    fn round_trip_f32_and_f64() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamSet::<f64>::default();
        p.push("a", array![[1.0, 2.5], [-3.0, 0.1]]);
        p.push("b", array![[7.0]]);
        save_checkpoint(dir.path().join("x"), "toy", 4, &Cfg { width: 3 }, &p).unwrap();
        let (m, c, q): (_, Cfg, ParamSet<f64>) = load_checkpoint(dir.path().join("x"), "toy").unwrap();
        assert_eq!(m.step, 4);
        assert_eq!(c, Cfg { width: 3 });
        assert_eq!(q, p);

        let p32 = p.cast::<f32>();
        save_checkpoint(dir.path().join("y"), "toy", 0, &Cfg { width: 1 }, &p32).unwrap();
        let (_, _, q32): (_, Cfg, ParamSet<f32>) = load_checkpoint(dir.path().join("y"), "toy").unwrap();
        assert_eq!(q32, p32);
    }

    #[test]
    fn truncated_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamSet::<f32>::default();
        p.push("a", array![[1.0, 2.0, 3.0]]);
        save_checkpoint(dir.path(), "toy", 0, &Cfg { width: 1 }, &p).unwrap();
        let data = dir.path().join(DATA);
        let bytes = std::fs::read(&data).unwrap();
        std::fs::write(&data, &bytes[..bytes.len() - 1]).unwrap();
        let r: Result<(_, Cfg, ParamSet<f32>)> = load_checkpoint(dir.path(), "toy");
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
        let r: Result<(_, Cfg, ParamSet<f32>)> = load_checkpoint(dir.path(), "other");
        assert!(matches!(r, Err(Error::CorruptManifest(_))));
    }
}
