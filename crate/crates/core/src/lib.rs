//! Online multiclass classification under noisy bandit feedback.
//!
//! The learner sees an instance, commits to a label drawn from an
//! exploration distribution, and receives a single bit telling it whether
//! that label was correct — except the bit may have been flipped by a
//! binary noise channel. This crate provides:
//!
//! - a linear multiclass model with the full-information perceptron step
//!   ([`linear_model`]),
//! - the exploration distribution, the noise channel, an unbiased
//!   estimator of the clean feedback bit, and the bandit update matrices
//!   ([`bandit_feedback`]),
//! - the online learners RCNBF (known noise rates), Banditron, and RCINE
//!   (rates estimated on the fly), plus their mistake-bound calculator
//!   ([`learners`]),
//! - NREst, a feedforward-network noise-rate estimator built on
//!   percentile anchor points ([`nrest`]),
//! - dataset generation and ingestion ([`datasets`]), and
//! - a deterministic multi-seed experiment harness ([`experiments`]).
//!
//! All randomness flows through explicitly seeded streams ([`seeding`]);
//! rerunning any experiment with the same master seed reproduces every
//! output byte.

pub mod bandit_feedback;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod learners;
pub mod linear_model;
pub mod nrest;
pub mod seeding;

pub use bandit_feedback::{
    banditron_update, corrupt_feedback, expected_update, expected_update_norm_bound,
    exploration_dist, true_feedback, unbiased_feedback, ExplorationDistribution, Feedback,
    NoiseRates,
};
pub use datasets::{generate_synsep, load_csv, load_idx, Dataset, SynSepSpec};
pub use error::{CoreError, DataError, EstimationError};
pub use learners::{
    gamma_for_regime, mistake_bound, run_banditron, run_rcine, run_rcnbf, Banditron, BoundInputs,
    LearnerConfig, NoiseRegime, OnlineBanditLearner, Rcnbf, RunMetrics,
};
pub use linear_model::{
    hinge_loss, perceptron_update, run_perceptron, Example, Label, UpdateMatrix, WeightMatrix,
};
pub use nrest::{estimate_rates, EstimationProfile, FeedbackRecord, ProbabilityNet};
pub use seeding::{mix64, substream, RngStream};
