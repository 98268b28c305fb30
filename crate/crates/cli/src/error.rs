use scorecast_core::abtest::AbError;
use scorecast_core::attentive::AttentiveError;
use scorecast_core::cf::CfError;
use scorecast_core::corpus::CorpusError;
use scorecast_core::eval::EvalError;
use std::fmt;

/// Failure classes with fixed exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Train(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Train(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Data(_) => "DataError",
            CliError::Train(_) => "TrainError",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Train(m) => m,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        })
        .to_string()
    }

    /// Prefix the message with the file or stage it concerns.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Train(m) => CliError::Train(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CfError> for CliError {
    fn from(e: CfError) -> Self {
        match e {
            CfError::InvalidHyper(_) => CliError::Config(e.to_string()),
            CfError::NonFiniteLoss { .. }
            | CfError::DegenerateDesign { .. }
            | CfError::NonMonotoneFit { .. } => CliError::Train(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AttentiveError> for CliError {
    fn from(e: AttentiveError) -> Self {
        match e {
            AttentiveError::InvalidConfig(_) => CliError::Config(e.to_string()),
            AttentiveError::NonFiniteLoss { .. } | AttentiveError::HeadMismatch { .. } => {
                CliError::Train(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Cf(e) => e.into(),
            EvalError::Attentive(e) => e.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AbError> for CliError {
    fn from(e: AbError) -> Self {
        match e {
            AbError::InvalidConfig(_) => CliError::Config(e.to_string()),
            AbError::UntrainedModel(_) => CliError::Train(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
