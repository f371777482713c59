//! Error type and the exit-code contract.

use std::path::PathBuf;
use std::process::ExitCode;

use imvote_core::analysis::AnalysisError;
use imvote_core::exactprob::ExactError;
use imvote_core::model::ModelError;
use imvote_core::strategize::StrategizeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Malformed document; `location` is a line/column or a field path.
    #[error("{}: parse error at {location}: {message}", path.display())]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },
    #[error("{}: invalid instance: {source}", path.display())]
    Validation { path: PathBuf, source: ModelError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Strategize(#[from] StrategizeError),
    #[error("{failed} of {total} checks failed")]
    VerificationFailed { failed: usize, total: usize },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// 0 success, 1 usage / parse / validation, 2 verification failure,
    /// 3 numeric failure inside the analysis.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Io { .. } | Self::Parse { .. } | Self::Validation { .. } => 1,
            Self::Model(_) => 1,
            Self::VerificationFailed { .. } => 2,
            Self::Analysis(e) => analysis_code(e),
            Self::Exact(e) => exact_code(e),
            Self::Strategize(e) => match e {
                StrategizeError::Exact(e) => exact_code(e),
                StrategizeError::Model(_)
                | StrategizeError::InvalidAdjustment(_)
                | StrategizeError::InvalidCandidate(_)
                | StrategizeError::InvalidResolution(_)
                | StrategizeError::InvalidSize => 1,
                StrategizeError::ConstructionInfeasible(_) => 3,
            },
        }
    }

    pub fn to_exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}

fn exact_code(e: &ExactError) -> u8 {
    match e {
        ExactError::ProfileLength { .. }
        | ExactError::SignalCount { .. }
        | ExactError::NoSamples => 1,
        ExactError::InstanceTooLarge(_) => 3,
    }
}

fn analysis_code(e: &AnalysisError) -> u8 {
    match e {
        AnalysisError::Exact(e) => exact_code(e),
        AnalysisError::Model(_)
        | AnalysisError::InvalidTieBreak(_)
        | AnalysisError::TooFewSamples { .. }
        | AnalysisError::NotAscending
        | AnalysisError::NotBinary
        | AnalysisError::GroupCount { .. } => 1,
        AnalysisError::NonPositiveExcess(_)
        | AnalysisError::ZeroVariance
        | AnalysisError::ZeroProbabilitySignal(_) => 3,
    }
}
