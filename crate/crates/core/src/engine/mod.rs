//! Particle inference: importance sampling, SMC and rejection sampling.

mod config;
mod run;
mod weights;

pub use config::{InferenceConfig, Method, SelectMode, DEFAULT_MAX_STEPS};
pub use run::{
    best_of_n, run_importance, run_inference, run_rejection, run_smc, select_answer, Diagnostics,
    InferenceOutcome, StepSnapshot, WeightedCandidate,
};
pub use weights::{
    effective_sample_size, log_sum_exp, normalize_weights, resample, resample_indices,
    ResampleScheme,
};
