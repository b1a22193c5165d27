use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument does not hold.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The input is well-formed but does not determine a unique answer.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A plugin returned something that breaks its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A remote plugin could not be reached or answered with an error.
    #[error("transport error: {0}")]
    Transport(String),

    /// A pipeline stage is missing one of its inputs.
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    /// Failure inside one view of the panorama loop.
    #[error("view {view}: {source}")]
    Stage {
        view: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_view(self, view: usize) -> Self {
        Error::Stage {
            view,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through [`Error::Stage`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the `panoscene` binary.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::MissingArtifact(_) => 2,
            Error::Transport(_) => 3,
            Error::Contract(_) => 4,
            Error::Parameter(_) | Error::Degenerate(_) => 5,
            Error::Format { .. } | Error::Json(_) | Error::Image(_) | Error::Io(_) => 1,
            Error::Stage { .. } => unreachable!(),
        }
    }
}
