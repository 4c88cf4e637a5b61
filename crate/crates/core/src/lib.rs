//! Full-body motion generation from head-mounted device signals with a
//! conditional diffusion model.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command line and the tests.

pub mod conditioning;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod scalar;
pub mod streaming;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Denoiser32 = denoiser::Denoiser<f32>;
pub type Denoiser64 = denoiser::Denoiser<f64>;
pub type PcAutoencoder32 = conditioning::PcAutoencoder<f32>;
pub type PcAutoencoder64 = conditioning::PcAutoencoder<f64>;
pub type LatentEvalModel32 = metrics::LatentEvalModel<f32>;
pub type MotionWindow64 = motion::MotionWindow<f64>;
pub type WorldMotion64 = motion::WorldMotion<f64>;
pub type Skeleton64 = motion::Skeleton<f64>;
