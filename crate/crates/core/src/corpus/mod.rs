//! Interaction and score-label data: types, file formats, sequence building,
//! planted synthetic data and the user-disjoint split.

mod io;
mod sequence;
mod split;
pub mod synth;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use io::{
    parse_interactions, parse_labels, read_interactions, read_labels, write_interactions, write_labels,
    InteractionFormat, INTERACTION_COLUMNS, LABEL_COLUMNS,
};
pub use sequence::{build_sequences, StudentSequence, DEFAULT_MAX_LEN};
pub use split::{split_dataset, DatasetSplit, Partition};
pub use synth::{generate_synthetic, PlantedModel, SynthConfig, SyntheticCorpus};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    UnexpectedHeader { expected: String, found: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty input")]
    EmptyInput,
}

/// TOEIC question section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    LC,
    RC,
}

impl Section {
    pub const ALL: [Section; 2] = [Section::LC, Section::RC];

    pub fn as_str(self) -> &'static str {
        match self {
            Section::LC => "LC",
            Section::RC => "RC",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Section::LC => 0,
            Section::RC => 1,
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Section {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LC" => Ok(Section::LC),
            "RC" => Ok(Section::RC),
            other => Err(format!("unknown section `{other}`")),
        }
    }
}

/// One student response to one question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub question_id: String,
    pub section: Section,
    pub correct: bool,
    pub elapsed_ms: u64,
    pub time_limit_ms: u64,
    pub timestamp: i64,
}

impl Interaction {
    /// Answered within the question's time limit.
    pub fn timely(&self) -> bool {
        self.elapsed_ms <= self.time_limit_ms
    }
}

/// A reported exam score. Section scores are optional for real reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreLabel {
    pub user_id: String,
    pub score_total: u32,
    pub score_lc: Option<u32>,
    pub score_rc: Option<u32>,
    pub report_time: i64,
}

impl ScoreLabel {
    pub fn validate(&self) -> Result<(), String> {
        if self.score_total > 990 {
            return Err(format!("score_total {} outside [0, 990]", self.score_total));
        }
        for (name, s) in [("score_lc", self.score_lc), ("score_rc", self.score_rc)] {
            if let Some(s) = s {
                if s > 495 {
                    return Err(format!("{name} {s} outside [0, 495]"));
                }
            }
        }
        if let (Some(lc), Some(rc)) = (self.score_lc, self.score_rc) {
            if lc + rc != self.score_total {
                return Err(format!("section scores {lc} + {rc} do not sum to total {}", self.score_total));
            }
        }
        Ok(())
    }

    pub fn section(&self, section: Section) -> Option<u32> {
        match section {
            Section::LC => self.score_lc,
            Section::RC => self.score_rc,
        }
    }
}
