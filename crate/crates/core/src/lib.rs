//! Differentially private gradient-based meta-learning for convex tasks.
//!
//! A meta-learner maintains an initialization `φ`. Each task owner runs two
//! learners from it: plain online gradient descent, whose averaged iterate
//! `θ̂` stays local and is used for inference, and an (ε, δ)-DP noisy SGD,
//! whose averaged iterate `θ̄` is the only thing released. The meta-learner
//! averages the released parameters, and new tasks start OGD from the average
//! `φ̂` of the initializations it used.
//!
//! The [`harness`] module wraps this in a synthetic task environment with a
//! tunable task-similarity parameter and measures excess transfer risk.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod learners;
pub mod losses;
pub mod meta;
pub mod privacy;
pub mod seeding;
pub mod task_env;

pub use error::{Error, Result};
pub use geometry::{clip_norm, dist_sq, project, ParamDomain, ParamVector};
pub use learners::{
    meta_gamma, noisy_sgd_run, noisy_sgd_run_with, ogd_run, ogd_run_with, test_time_eta,
    GammaVariant, LearnerOutput, OgdConfig, SampleOrder,
};
pub use losses::{
    certify_smoothness, finite_diff_check, make_logistic, make_quadratic, LossFamily, LossFunction,
    RegularityProfile,
};
pub use meta::{
    meta_step, meta_step_batched, run_meta_training, surrogate_loss, MetaState, MetaTrainingConfig,
    MetaTrainingOutcome, TaskRecord,
};
pub use privacy::{
    compose_sequential, group_dp, noise_variance, step_budget, DpGuarantee, GaussianNoise,
    NoisySgdPlan, PrivacyParams,
};
pub use task_env::{
    empirical_task_variance, generate_losses, population_risk_gap, sample_task, EnvSpec,
    FamilyParams, RiskGap, SyntheticEnvironment, Task, TaskSource, TaskSpec,
};
