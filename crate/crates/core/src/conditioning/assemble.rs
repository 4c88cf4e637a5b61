//! Per-frame condition vectors `[head features | image embedding | pc latent]`.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};

use super::pc_ae::PC_LATENT_DIM;
use crate::error::{Error, Result};
use crate::motion::{HeadFeatureWindow, HEAD_FEATURE_DIM};
use crate::scalar::Scalar;

/// Column layout of a condition row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionLayout {
    pub d_img: usize,
}

impl ConditionLayout {
    pub fn new(d_img: usize) -> Self {
        Self { d_img }
    }

    pub fn width(&self) -> usize {
        HEAD_FEATURE_DIM + self.d_img + PC_LATENT_DIM
    }

    pub fn head(&self) -> Range<usize> {
        0..HEAD_FEATURE_DIM
    }

    pub fn image(&self) -> Range<usize> {
        HEAD_FEATURE_DIM..HEAD_FEATURE_DIM + self.d_img
    }

    pub fn pc(&self) -> Range<usize> {
        HEAD_FEATURE_DIM + self.d_img..self.width()
    }
}

/// Which part of the condition to blank out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionBlock {
    Image,
    PointCloud,
}

/// `T × (15 + d_img + 128)` condition rows for one window. `start` is the
/// global frame index of row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionWindow<T: Scalar> {
    pub data: Array2<T>,
    pub layout: ConditionLayout,
    pub start: usize,
}

impl<T: Scalar> ConditionWindow<T> {
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn zero_block(&mut self, block: ConditionBlock) {
        let cols = match block {
            ConditionBlock::Image => self.layout.image(),
            ConditionBlock::PointCloud => self.layout.pc(),
        };
        self.data.slice_mut(s![.., cols]).fill(T::zero());
    }
}

pub fn assemble_condition<T: Scalar>(
    head: &HeadFeatureWindow<T>,
    imgs: ArrayView2<'_, T>,
    latents: ArrayView2<'_, T>,
) -> Result<ConditionWindow<T>> {
    let t = head.len();
    if imgs.nrows() != t || latents.nrows() != t {
        return Err(Error::LengthMismatch(format!(
            "head {t} frames, images {}, latents {}",
            imgs.nrows(),
            latents.nrows()
        )));
    }
    if latents.ncols() != PC_LATENT_DIM {
        return Err(Error::ShapeMismatch(format!("pc latents have {} columns", latents.ncols())));
    }
    let layout = ConditionLayout::new(imgs.ncols());
    let mut data = Array2::zeros((t, layout.width()));
    data.slice_mut(s![.., layout.head()]).assign(&head.frames);
    data.slice_mut(s![.., layout.image()]).assign(&imgs);
    data.slice_mut(s![.., layout.pc()]).assign(&latents);
    Ok(ConditionWindow { data, layout, start: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{canonicalize_window, SE3Pose, Vec3};

    fn head(t: usize) -> HeadFeatureWindow<f64> {
        let poses: Vec<_> = (0..t)
            .map(|i| SE3Pose::from_yaw(Vec3::new(0.02 * i as f64, 0.0, 1.6), 0.01 * i as f64))
            .collect();
        canonicalize_window(&poses, 1.0 / 60.0).unwrap().0
    }

    #[test]
    fn width_and_zero_padding() {
        assert_eq!(ConditionLayout::new(768).width(), 911);
        let h = head(6);
        let c = assemble_condition(&h, Array2::zeros((6, 4)).view(), Array2::zeros((6, 128)).view()).unwrap();
        assert_eq!(c.data.dim(), (6, 15 + 4 + 128));
        assert_eq!(c.data.slice(s![.., 0..15]), h.frames);
        assert!(c.data.slice(s![.., 15..]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn per_frame_locality() {
        let h = head(5);
        let imgs = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64);
        let lat = Array2::from_shape_fn((5, 128), |(i, j)| (i + j) as f64 * 0.01);
        let a = assemble_condition(&h, imgs.view(), lat.view()).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let mut hp = h.clone();
        let mut ip = imgs.clone();
        let mut lp = lat.clone();
        for (dst, &src) in perm.iter().enumerate() {
            hp.frames.row_mut(dst).assign(&h.frames.row(src));
            ip.row_mut(dst).assign(&imgs.row(src));
            lp.row_mut(dst).assign(&lat.row(src));
        }
        let b = assemble_condition(&hp, ip.view(), lp.view()).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(b.data.row(dst), a.data.row(src));
        }
        assert!(matches!(
            assemble_condition(&h, imgs.slice(s![0..4, ..]), lat.view()),
            Err(Error::LengthMismatch(_))
        ));
    }
}
