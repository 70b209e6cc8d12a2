use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mask selects {0} samples, at least 2 are required")]
    MaskTooSmall(usize),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error("stale trace: {0}")]
    StaleTrace(String),

    #[error("empty partition: {0}")]
    EmptyPartition(String),

    #[error("empty record")]
    EmptyRecord,

    #[error("empty grid")]
    EmptyGrid,

    #[error("unknown speaker: {0}")]
    UnknownSpeaker(String),

    #[error("at least two speakers are required, found {0}")]
    TooFewSpeakers(usize),

    #[error("training diverged at epoch {epoch} (restart {restart})")]
    Diverged { epoch: usize, restart: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: missing or malformed header", .0.display())]
    MissingHeader(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
