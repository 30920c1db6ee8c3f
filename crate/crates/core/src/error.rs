use std::path::PathBuf;

use thiserror::Error;

use crate::bridge::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape {index}: {reason}")]
    InvalidGeometry { index: usize, reason: String },

    #[error("polygon is self-intersecting: edges {first} and {second} cross")]
    SelfIntersecting { first: usize, second: usize },

    #[error("scene contains no shapes")]
    EmptyScene,

    #[error("duplicate shape id {0}")]
    DuplicateId(u64),

    #[error("unsupported SVG content in element {index}: {reason}")]
    UnsupportedSvg { index: usize, reason: String },

    #[error("malformed scene file: {0}")]
    MalformedScene(String),

    #[error("field list is empty")]
    EmptyFieldList,

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("occupancy is empty; nothing to wrap a membrane around")]
    EmptyOccupancy,

    #[error("guidance provider failed: {0}")]
    Guidance(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
