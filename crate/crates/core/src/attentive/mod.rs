//! Assessment modeling with a small bidirectional Transformer encoder.
//!
//! Each interaction becomes one position whose input is the sum of question,
//! section, correctness, timeliness and position embeddings. Pre-training
//! masks both assessment channels at random positions and predicts them with
//! a per-position head; fine-tuning swaps in a freshly initialized
//! mean-pooled regression head and trains on total scores scaled by 1/990.
//! All gradients are computed by the hand-written kernel in [`kernel`].

mod gradcheck;
pub mod kernel;
mod model;
mod params;
mod persist;
mod tokens;

use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckReport};
pub use kernel::{attention, attention_weights, encoder_forward, layer_norm, EncoderCache, LN_EPS};
pub use model::{
    finetune, mask_assessments, predict_batch, predict_score_am, pretrain, pretrain_objective, raw_to_score,
    score_examples, score_objective, AmPrediction, AttentiveModel, EpochMetrics, FinetuneHyper,
    FinetuneOutput, MaskTarget, PretrainHyper, PretrainOutput, ScoreExample, TrainMeta,
};
pub use params::{EncoderConfig, EncoderParams, Head, HeadKind, LayerOffsets, Layout};
pub use persist::{read_model, write_metrics_log, write_model, AM_FORMAT_VERSION, AM_MAGIC};
pub use tokens::{
    assessment, tokenize, Token, Tokenized, TokenizedSequence, Vocab, ASSESSMENT_VOCAB, PAD_QUESTION,
    SECTION_PAD, SECTION_VOCAB, UNK_QUESTION,
};

#[derive(Debug, Error)]
pub enum AttentiveError {
    #[error("every position is padding")]
    AllMasked,
    #[error("empty sequence")]
    EmptySequence,
    #[error("question token {token} outside vocabulary of size {vocab_size}")]
    VocabOverflow { token: u32, vocab_size: usize },
    #[error("sequence length {len} exceeds max_len {max_len}")]
    LengthOverflow { len: usize, max_len: usize },
    #[error("malformed token sequence: {0}")]
    InvalidSequence(String),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("expected a {expected:?} head, found {found:?}")]
    HeadMismatch { expected: HeadKind, found: HeadKind },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
