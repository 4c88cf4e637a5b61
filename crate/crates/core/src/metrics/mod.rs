//! Evaluation suite: joint position errors, latent-space distribution
//! metrics, ground-contact metrics and aggregated reports.

pub mod distribution;
pub mod eval_ae;
pub mod physical;
pub mod position;
pub mod report;

pub use distribution::{cross_diversity, diversity, diversity_subset, frechet_distance, Frechet};
pub use eval_ae::{motion_features, motion_windows, train_eval_autoencoder, EvalAeConfig, LatentEvalModel};
pub use physical::{floor_penetration, floor_proxy, physicality};
pub use position::{mpjpe, per_frame_error, region_pe, JointSets};
pub use report::{evaluate_run, percentile_report, EvalOptions, EvalSequence, MetricRow, MetricsReport, Stat};
