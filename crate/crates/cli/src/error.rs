//! CLI failure classification and exit codes.
//!
//! Every failure maps to one of three exit codes: 1 for usage problems
//! (bad flags, invalid configuration), 2 for data problems (missing or
//! malformed files, datasets that violate their contracts), and 3 for
//! numeric failures (non-finite losses or gradients, failed gradient
//! checks). Success is 0.

use std::path::Path;

use thiserror::Error;
use treble_core::CoreError;
use treble_eval::EvalError;
use treble_index::IndexError;
use treble_rag::RagError;
use treble_train::TrainError;

/// A classified CLI failure.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invocation or configuration mistakes. Exit code 1.
    #[error("{0}")]
    Usage(String),

    /// Missing, malformed, or contract-violating input data. Exit code 2.
    #[error("{0}")]
    Data(String),

    /// Non-finite numerics or a failed gradient check. Exit code 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    /// Annotate an I/O-ish error with the file it concerns.
    pub fn at(path: &Path, err: impl std::fmt::Display) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::NonFinite(_) => CliError::Numeric(err.to_string()),
            CoreError::InvalidConfig(_) => CliError::Usage(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } => {
                CliError::Numeric(err.to_string())
            }
            TrainError::InvalidConfig(_) => CliError::Usage(err.to_string()),
            TrainError::Core(core) => CliError::from(core),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(err: IndexError) -> Self {
        match err {
            IndexError::InvalidConfig(_) => CliError::Usage(err.to_string()),
            IndexError::NonFinite(_) => CliError::Numeric(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<RagError> for CliError {
    fn from(err: RagError) -> Self {
        match err {
            RagError::InvalidConfig(_) => CliError::Usage(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
