//! Engagement experiment harness: hashed arm assignment, a cohort simulator
//! in which funnel probabilities fall with the score error a user sees, and
//! per-arm engagement metrics with significance tests.

mod assign;
mod behavior;
mod metrics;
mod simulate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::{assign_arm, hash_unit, Assignment};
pub use behavior::{BehaviorConfig, PaperTargets, Stage};
pub use metrics::{
    compute_metrics, read_journeys, render_text, significance_test, two_proportion_z, welch_t, write_gap_csv,
    write_journeys, ArmMetrics, EngagementReport, Significance, TestResult,
};
pub use simulate::{
    simulate_cohort, AttentiveScorer, CfScorer, CohortSpec, DiagnosticScorer, OracleScorer, UserJourney,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Cf,
    Attentive,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Cf => "cf",
            Arm::Attentive => "attentive",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum AbError {
    #[error("scorer is not trained: {0}")]
    UntrainedModel(String),
    #[error("journeys cover only the {0} arm")]
    SingleArm(Arm),
    #[error("no journeys")]
    EmptyInput,
    #[error("arm {arm} has {n} users; significance tests need at least 30")]
    InsufficientN { arm: Arm, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scorer failed: {0}")]
    Scorer(String),
    #[error("journey log line {line}: {reason}")]
    MalformedJourney { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
