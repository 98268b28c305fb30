//! Exam-score prediction with two interchangeable backends and an engagement
//! experiment harness.
//!
//! * [`corpus`]: interaction/label data model, file IO, planted synthetic data
//!   and the user-disjoint split protocol.
//! * [`cf`]: latent-factor correctness model trained by projected SGD, with a
//!   quadratic per-section score mapping.
//! * [`attentive`]: a small bidirectional Transformer encoder with a
//!   hand-written gradient kernel, masked-assessment pre-training and score
//!   fine-tuning.
//! * [`eval`]: MAE/RMSE evaluation over labelled splits.
//! * [`abtest`]: hashed arm assignment, cohort simulation and engagement
//!   metrics with significance tests.

pub mod abtest;
pub mod attentive;
pub mod cf;
pub mod corpus;
pub mod eval;
pub mod rng;
pub mod score;

pub use corpus::{Interaction, ScoreLabel, Section, StudentSequence};
pub use score::ScorePrediction;
