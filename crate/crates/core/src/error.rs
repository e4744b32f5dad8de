use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class `{0}` has no images")]
    EmptyClass(String),

    #[error("class `{class}` has {count} samples; at least 3 are needed to populate every split")]
    TooFewSamples { class: String, count: usize },

    #[error("architecture does not fit a {resolution}x{resolution} input: layer {layer} ({detail})")]
    IncompatibleResolution {
        resolution: usize,
        layer: usize,
        detail: String,
    },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("classifier checksum mismatch: bundle expects {expected}, got {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("classifier is not frozen; train it (or load a checkpoint) before using it for translation training")]
    NotFrozen,

    #[error("missing file or directory: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingPath(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// True for errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Shape(_)
                | Error::EmptyClass(_)
                | Error::TooFewSamples { .. }
                | Error::IncompatibleResolution { .. }
                | Error::ChecksumMismatch { .. }
                | Error::NotFrozen
                | Error::MissingPath(_)
                | Error::Format { .. }
        )
    }
}
