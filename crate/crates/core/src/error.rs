use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate id at line {line}: {id}")]
    DuplicateId { line: usize, id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image for post {post_id}: {message}")]
    Image { post_id: String, message: String },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss encountered: {0}")]
    NonFiniteLoss(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged {
        epoch: usize,
        message: String,
        /// Epochs completed before the failure.
        history: Box<crate::training::RunHistory>,
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
