use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditionLayout, PC_LATENT_DIM};
use crate::error::{Error, Result};
use crate::motion::{FEATURE_DIM, HEAD_FEATURE_DIM};

/// Shape of the transformer denoiser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub latent_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Window length in frames.
    pub frames: usize,
    /// Motion features per frame.
    pub features: usize,
    pub cond_dim: usize,
    /// Diffusion steps the timestep embedding is sized for.
    pub steps: usize,
    pub seed: u64,
}

impl DenoiserConfig {
    /// Full-size model: 512 wide, 8 layers, 8 heads.
    pub fn standard(frames: usize, d_img: usize) -> Self {
        Self {
            latent_dim: 512,
            layers: 8,
            heads: 8,
            mlp_ratio: 4,
            frames,
            features: FEATURE_DIM,
            cond_dim: ConditionLayout::new(d_img).width(),
            steps: 1000,
            seed: 0,
        }
    }

    /// Desk-scale model: 64 wide, 2 layers, 4 heads.
    pub fn toy(frames: usize, d_img: usize) -> Self {
        Self { latent_dim: 64, layers: 2, heads: 4, ..Self::standard(frames, d_img) }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("frames", self.frames),
            ("features", self.features),
            ("cond_dim", self.cond_dim),
            ("steps", self.steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::BadConfig(format!("{name} must be positive")));
        }
        if self.latent_dim % self.heads != 0 {
            return Err(Error::BadConfig(format!(
                "latent_dim {} is not divisible by heads {}",
                self.latent_dim, self.heads
            )));
        }
        if self.latent_dim % 2 != 0 {
            return Err(Error::BadConfig("latent_dim must be even".into()));
        }
        Ok(())
    }

    /// Condition layout implied by `cond_dim`, if it has room for the head
    /// features and a point-cloud latent.
    pub fn layout(&self) -> Option<ConditionLayout> {
        self.cond_dim
            .checked_sub(HEAD_FEATURE_DIM + PC_LATENT_DIM)
            .map(ConditionLayout::new)
    }

    /// Number of scalars in the parameter set, from the tensor shapes.
    pub fn param_count(&self) -> usize {
        let d = self.latent_dim;
        let (f, c, r) = (self.features, self.cond_dim, self.mlp_ratio);
        let input = (f + c) * 2 * d + 2 * d + 2 * d * d + d;
        let time = 2 * (d * d + d);
        let block = (d * 6 * d + 6 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (d * r * d + r * d) + (r * d * d + d);
        let head = (d * 2 * d + 2 * d) + (d * f + f);
        input + time + self.layers * block + head
    }
}
