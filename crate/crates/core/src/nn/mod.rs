//! Minimal neural-network machinery: autodiff tape, parameters, optimizer,
//! convolution geometry and checkpoints.

pub mod checkpoint;
pub mod conv;
pub mod params;
pub mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use conv::{ConvLayer, ConvTransposeLayer};
pub use params::{glorot, Adam, AdamConfig, ParamId, ParamSet};
pub use tape::{Grads, IndexMap, Tape, Var};
