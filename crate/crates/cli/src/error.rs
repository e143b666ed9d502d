//! Mapping from library errors to CLI exit codes.

use dragforge_core::corpus::CorpusError;
use dragforge_core::dataset::DatasetError;
use dragforge_core::dictionary::DictError;
use dragforge_core::eval::EvalError;
use dragforge_core::prompting::PromptError;
use dragforge_core::retrieval::RetrievalError;
use dragforge_core::util::IoError;

/// CLI failure classified by exit code: validation 1, I/O 2, provider 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<DictError> for CliError {
    fn from(e: DictError) -> Self {
        match e {
            DictError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Io(io) => CliError::Io(io.to_string()),
            RetrievalError::Provider { .. } | RetrievalError::ProviderBatch { .. } => {
                CliError::Provider(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(io) => CliError::Io(io.to_string()),
            DatasetError::Retrieval { ref source, .. } => match source {
                RetrievalError::Provider { .. } | RetrievalError::ProviderBatch { .. } => {
                    CliError::Provider(e.to_string())
                }
                RetrievalError::Io(_) => CliError::Io(e.to_string()),
                _ => CliError::Validation(e.to_string()),
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::Validation(e.to_string())
    }
}
