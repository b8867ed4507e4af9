use std::path::Path;

use reef_core::dataset::DatasetError;
use reef_core::eval::EvalError;
use reef_pipeline::{ConfigError, PipelineError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    /// Some quadrats of a batch failed; outputs were still written.
    #[error("{failed} of {total} quadrats failed")]
    Partial { failed: usize, total: usize, backend: bool },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for backend and protocol failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) if e.is_backend() => 2,
            CliError::Partial { backend: true, .. } => 2,
            _ => 1,
        }
    }
}
