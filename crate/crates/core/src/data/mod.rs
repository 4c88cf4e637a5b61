//! Sequence bundles, the synthetic generator, configuration and the
//! pipeline helpers behind the command line.

pub mod bench;
pub mod bundle;
pub mod config;
pub mod pipeline;
pub mod synth;

pub use bench::{steps_sweep, stride_sweep, BenchReport, BenchRow};
pub use bundle::{load_bundle, load_manifest, save_bundle, Manifest, SequenceBundle};
pub use config::GlobalConfig;
pub use pipeline::{
    aligned_motions, bundle_voxel_grids, evaluate_bundles, generate_sequence, mean_pose, prediction_bundle,
    prepare_sequence, Ablation, Generated, PreparedSequence, WindowSet,
};
pub use synth::{synth_generate, synth_sequence, Scenario, SynthNoise, SynthSequence, SynthSpec};
