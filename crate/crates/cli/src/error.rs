use std::path::PathBuf;

use expecta_core::Error as CoreError;

/// Errors with a process exit code attached.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {path}: run `expecta {stage}` first")]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("stale artifact {path}: written with config {found}, current config is {expected}; rerun `expecta {stage}`")]
    StaleArtifact {
        stage: &'static str,
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(CoreError),

    #[error(transparent)]
    Core(CoreError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } | CliError::StaleArtifact { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

fn is_numerical(e: &CoreError) -> bool {
    match e {
        CoreError::Diverged { .. } => true,
        CoreError::Sample { source, .. } | CoreError::Coalition { source, .. } => is_numerical(source),
        _ => false,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Spec(m) => CliError::Config(m),
            e if is_numerical(&e) => CliError::Numerical(e),
            e => CliError::Core(e),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(CoreError::Json(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
