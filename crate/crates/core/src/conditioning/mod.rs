//! Per-frame condition vectors: head features, image embeddings and a
//! point-cloud latent of the scene around the head.

pub mod assemble;
pub mod embeddings;
pub mod pc_ae;
pub mod scene;
pub mod source;
pub mod voxel;

pub use assemble::{assemble_condition, ConditionBlock, ConditionLayout, ConditionWindow};
pub use embeddings::{upsample_embeddings, ImageEmbeddingStream};
pub use pc_ae::{train_pc_autoencoder, PcAutoencoder, PcTrainConfig, PC_AE_KIND, PC_LATENT_DIM};
pub use scene::{crop_scene, MapMode, SceneIndex, SceneMap};
pub use source::{pc_latents, voxel_grids, ConditionSource};
pub use voxel::{voxelize, VoxelGrid};
