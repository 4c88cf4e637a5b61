//! Whole-sequence condition streams and per-window extraction.

use ndarray::{s, Array2};

use super::assemble::{assemble_condition, ConditionWindow};
use super::embeddings::{upsample_embeddings, ImageEmbeddingStream};
use super::pc_ae::{PcAutoencoder, PC_LATENT_DIM};
use super::scene::{crop_center, MapMode, SceneIndex};
use super::voxel::{voxelize, VoxelGrid};
use crate::error::{Error, Result};
use crate::motion::{canonicalize_window, SE3Pose};
use crate::scalar::Scalar;

/// Voxel grid around every head pose.
pub fn voxel_grids<T: Scalar>(index: &SceneIndex<T>, heads: &[SE3Pose<T>], mode: MapMode) -> Vec<VoxelGrid<T>> {
    heads
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let pts = index.crop(h, mode, i);
            voxelize(&pts, &crop_center(h), h.yaw())
        })
        .collect()
}

/// Encoded point-cloud latent for every head pose, `frames × 128`.
///
/// With `every > 1` only every `every`-th frame (and the last) is encoded
/// and the frames between are linearly interpolated.
pub fn pc_latents<T: Scalar>(
    index: &SceneIndex<T>,
    heads: &[SE3Pose<T>],
    model: &PcAutoencoder<T>,
    mode: MapMode,
    every: usize,
) -> Result<Array2<T>> {
    let n = heads.len();
    let every = every.max(1);
    let mut out = Array2::zeros((n, PC_LATENT_DIM));
    if n == 0 {
        return Ok(out);
    }
    let mut keys: Vec<usize> = (0..n).step_by(every).collect();
    if *keys.last().expect("n > 0") != n - 1 {
        keys.push(n - 1);
    }
    for &i in &keys {
        let h = &heads[i];
        let pts = index.crop(h, mode, i);
        let grid = voxelize(&pts, &crop_center(h), h.yaw());
        let z = model.encode(&grid)?;
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&z[..]));
    }
    for pair in keys.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in a + 1..b {
            let w = T::lit((i - a) as f64 / (b - a) as f64);
            for k in 0..PC_LATENT_DIM {
                out[[i, k]] = out[[a, k]] + (out[[b, k]] - out[[a, k]]) * w;
            }
        }
    }
    Ok(out)
}

/// Every condition input of one sequence at the motion frame rate.
#[derive(Debug, Clone)]
pub struct ConditionSource<T: Scalar> {
    pub head: Vec<SE3Pose<T>>,
    pub images: Array2<T>,
    pub latents: Array2<T>,
    pub dt: T,
}

impl<T: Scalar> ConditionSource<T> {
    /// `images` is the 30 fps stream; it is duplicated to 60 fps and cut to
    /// the head trajectory's length.
    pub fn new(head: Vec<SE3Pose<T>>, images: &ImageEmbeddingStream<T>, latents: Array2<T>, dt: T) -> Result<Self> {
        let n = head.len();
        let up = upsample_embeddings(images)?;
        if up.frames() < n || latents.nrows() != n {
            return Err(Error::LengthMismatch(format!(
                "head {n} frames, upsampled images {}, latents {}",
                up.frames(),
                latents.nrows()
            )));
        }
        let images = up.embeddings.slice(s![0..n, ..]).to_owned();
        Ok(Self { head, images, latents, dt })
    }

    pub fn frames(&self) -> usize {
        self.head.len()
    }

    pub fn d_img(&self) -> usize {
        self.images.ncols()
    }

    /// Condition rows for frames `start .. start + len`, canonicalized to `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<ConditionWindow<T>> {
        let end = start + len;
        if end > self.frames() {
            return Err(Error::ConditionGap(format!(
                "window {start}..{end} runs past the end of the stream ({} frames)",
                self.frames()
            )));
        }
        let (head, _) = canonicalize_window(&self.head[start..end], self.dt)?;
        let mut w = assemble_condition(
            &head,
            self.images.slice(s![start..end, ..]),
            self.latents.slice(s![start..end, ..]),
        )?;
        w.start = start;
        Ok(w)
    }

    /// The first `frames` frames only.
    pub fn truncated(&self, frames: usize) -> Self {
        let n = frames.min(self.frames());
        Self {
            head: self.head[..n].to_vec(),
            images: self.images.slice(s![0..n, ..]).to_owned(),
            latents: self.latents.slice(s![0..n, ..]).to_owned(),
            dt: self.dt,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::SceneMap;
    use crate::motion::Vec3;

    fn walk(n: usize) -> Vec<SE3Pose<f64>> {
        (0..n).map(|i| SE3Pose::from_yaw(Vec3::new(0.05 * i as f64, 0.0, 1.6), 0.02 * i as f64)).collect()
    }

    fn floor() -> SceneIndex<f64> {
        let pts = (0..400).map(|k| Vec3::new(-1.0 + 0.15 * (k % 20) as f64, -1.5 + 0.15 * (k / 20) as f64, 0.0)).collect();
        SceneIndex::new(SceneMap::new(pts))
    }

    #[test]
    fn keyframed_latents_interpolate() {
        let heads = walk(11);
        let model = PcAutoencoder::<f64>::new(1);
        let full = pc_latents(&floor(), &heads, &model, MapMode::FullMap, 1).unwrap();
        let keyed = pc_latents(&floor(), &heads, &model, MapMode::FullMap, 4).unwrap();
        for i in [0, 4, 8, 10] {
            assert_eq!(full.row(i), keyed.row(i));
        }
        for k in 0..PC_LATENT_DIM {
            let mid = 0.5 * (full[[0, k]] + full[[4, k]]);
            assert!((keyed[[2, k]] - mid).abs() < 1e-12);
            let last = full[[8, k]] + (full[[10, k]] - full[[8, k]]) * 0.5;
            assert!((keyed[[9, k]] - last).abs() < 1e-12);
        }
    }

    #[test]
    fn windows_are_canonical_and_bounded() {
        let heads = walk(30);
        let images = ImageEmbeddingStream::new(Array2::from_shape_fn((15, 3), |(i, j)| (i * 3 + j) as f64), 30.0).unwrap();
        let src = ConditionSource::new(heads, &images, Array2::zeros((30, PC_LATENT_DIM)), 1.0 / 60.0).unwrap();
        let w = src.window(10, 8).unwrap();
        assert_eq!(w.start, 10);
        // first row sits at the canonical origin, image rows come from frame / 2
        assert!(w.data.row(0).iter().take(3).all(|v| v.abs() < 1e-12));
        assert_eq!(w.data[[0, 15]], 15.0);
        assert_eq!(w.data[[1, 15]], 15.0);
        assert_eq!(w.data[[2, 15]], 18.0);
        assert!(matches!(src.window(25, 8), Err(Error::ConditionGap(_))));
        assert_eq!(src.truncated(12).frames(), 12);
    }
}
