//! Image-embedding streams and rate conversion.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Precomputed per-frame image embeddings at a source frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEmbeddingStream<T: Scalar> {
    pub embeddings: Array2<T>,
    pub fps: f64,
}

impl<T: Scalar> ImageEmbeddingStream<T> {
    pub fn new(embeddings: Array2<T>, fps: f64) -> Result<Self> {
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("image embeddings contain non-finite values".into()));
        }
        Ok(Self { embeddings, fps })
    }

    pub fn frames(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }
}

/// Duplicate every frame once: a 30 fps stream becomes 60 fps.
pub fn upsample_embeddings<T: Scalar>(stream: &ImageEmbeddingStream<T>) -> Result<ImageEmbeddingStream<T>> {
    let n = stream.frames();
    if n == 0 {
        return Err(Error::EmptyStream);
    }
    let e = &stream.embeddings;
    let out = Array2::from_shape_fn((2 * n, stream.dim()), |(i, j)| e[[i / 2, j]]);
    Ok(ImageEmbeddingStream { embeddings: out, fps: stream.fps * 2.0 })
}
