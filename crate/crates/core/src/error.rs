use thiserror::Error;

/// Failures surfaced by the learning and prediction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid object spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: u32, found: u32 },

    #[error("insufficient correspondences: {found} common features, need at least 3")]
    InsufficientCorrespondences { found: usize },

    #[error("segmentation found {found} clusters, need at least 2")]
    TooFewClusters { found: usize },

    #[error("parts are disconnected: no spanning tree over {parts} parts")]
    DisconnectedParts { parts: usize },

    #[error("unknown object '{0}'")]
    UnknownObject(String),

    #[error("duplicate object '{0}'")]
    DuplicateObject(String),

    #[error("missing configuration for edge ({0}, {1})")]
    MissingConfiguration(usize, usize),

    #[error("demonstration has no ground truth")]
    MissingGroundTruth,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
