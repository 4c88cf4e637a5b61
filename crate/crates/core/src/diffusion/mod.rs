//! Diffusion schedule, forward noising, strided reverse sampling and the
//! training objective.

pub mod sampler;
pub mod schedule;

pub use sampler::{gaussian, strided_plan, training_draw, training_loss, Sampler, StridedPlan, X0Predictor};
pub use schedule::{
    build_schedule, coeffs_from_alphas, diffuse_with_alpha, forward_diffuse, reverse_coeffs, reverse_step, DiffusionSchedule, ReverseCoeffs,
    ScheduleKind,
};
