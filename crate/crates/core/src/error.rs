use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("annotation {annotation} does not fit a {width}x{height} canvas")]
    RenderDomain {
        annotation: String,
        width: usize,
        height: usize,
    },

    #[error("image has no foreground pixels")]
    NoForeground,

    #[error("overlap index is undefined: both supports are empty")]
    UndefinedOverlap,

    #[error("incompatible bin grids: {0}")]
    GridMismatch(String),

    #[error("class {0} is missing from the label distribution")]
    MissingClass(u8),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed {section}: {detail}")]
    Format { section: String, detail: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("unknown class name {0:?}")]
    ClassMapping(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("value function failed on coalition {coalition}: {source}")]
    Coalition {
        coalition: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(section: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            section: section.into(),
            detail: detail.into(),
        }
    }
}
