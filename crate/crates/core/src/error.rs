use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, offset {offset}: {message}")]
    Parse {
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("in {file}: {source}")]
    InFile {
        file: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("missing split file {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty split after neutral filtering: {0}")]
    EmptySplit(String),

    #[error("sentiment label {0} outside 0..4")]
    InvalidLabel(i64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate training data: {0}")]
    Degenerate(String),

    #[error("vocabulary has {size} words, need at least {needed}")]
    VocabTooSmall { size: usize, needed: usize },

    #[error("index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot compare performances with different orientations")]
    OrientationMismatch,

    #[error("malformed artifact: {0}")]
    Artifact(String),

    #[error("node {0} has no private shard loaded")]
    UninitializedNode(usize),

    #[error("trial {trial} with {n_users} users failed: {source}")]
    Trial {
        n_users: usize,
        trial: usize,
        #[source]
        source: Box<Error>,
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

    /// True for errors caused by the input data rather than by a trial.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InFile { .. }
                | Error::MissingFile(_)
                | Error::Io { .. }
                | Error::EmptySplit(_)
                | Error::InvalidLabel(_)
                | Error::Json(_)
                | Error::Artifact(_)
        )
    }
}
