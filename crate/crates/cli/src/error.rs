use std::path::PathBuf;

use crate::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A malformed CSV or JSON input. `line` and `column` are 1-based.
    #[error("{}:{line}:{column}: {detail}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        detail: String,
    },
    #[error("{}: {source}", path.display())]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {}: run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("test partition purity: {0}")]
    Purity(String),
    #[error(transparent)]
    Core(#[from] dlban_core::Error),
}

impl CliError {
    /// Machine-parsable category printed on failure.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Checkpoint { source, .. } => source.category(),
            CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing-artifact",
            CliError::Purity(_) => "purity",
            CliError::Core(e) => e.category(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, column: usize, detail: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            column,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
