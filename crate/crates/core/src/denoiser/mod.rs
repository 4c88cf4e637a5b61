//! Transformer denoiser predicting clean motion from a noisy window, its
//! condition rows and the diffusion step.

pub mod config;
pub mod model;
pub mod train;

pub use config::DenoiserConfig;
pub use model::{draw_batch, init_params, sinusoidal, CondNormalizer, Denoiser, Draw};
pub use train::{load_denoiser, save_denoiser, train, TrainConfig, TrainReport, WindowDataset, DENOISER_KIND};
