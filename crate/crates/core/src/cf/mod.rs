//! Latent-factor correctness model.
//!
//! Each user `i` and question `j` carries a `k`-dimensional latent vector; the
//! knowledge level `X_ij = L_i · R_j` passes through the shared logistic link
//! [`PhiParams`] to give a correctness probability. Factors are fitted by
//! projected SGD on the negative log-likelihood with a Frobenius penalty, and
//! per-section average probabilities map to scores through quadratics.

mod calibrate;
mod model;
mod persist;
mod phi;
mod train;

use thiserror::Error;

pub use calibrate::{calibrate_theta, calibrate_theta_from_labels, calibrate_theta_with, QuadraticFit};
pub use model::{nll_gradient, nll_loss, project_row, CfModel, LatentFactors, Observation, ThetaParams};
pub use persist::{read_model, write_model, CF_FORMAT_VERSION, CF_MAGIC};
pub use phi::{correctness_prob, PhiParams};
pub use train::{train_cf, CfHyper, CfTrainOutput, FoldIn};

#[derive(Debug, Error)]
pub enum CfError {
    #[error("observation index out of range: user {user}, question {question}")]
    IndexOutOfRange { user: usize, question: usize },
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("empty training dataset")]
    EmptyDataset,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("empty question pool")]
    EmptyPool,
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("question `{question}` belongs to {actual}, not {expected}")]
    SectionMismatch { question: String, expected: crate::Section, actual: crate::Section },
    #[error("question `{0}` appears with both sections")]
    InconsistentSection(String),
    #[error("degenerate design: {distinct} distinct x values (need 3)")]
    DegenerateDesign { distinct: usize },
    #[error("fitted score mapping decreases on [0, 1] (slope {slope} at x = {x})")]
    NonMonotoneFit { x: f64, slope: f64 },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
