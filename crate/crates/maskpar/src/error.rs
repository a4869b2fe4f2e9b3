use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] maskpar_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    /// A manifest record that could not be loaded.
    #[error("record '{id}': {source}")]
    Record { id: String, source: Box<Error> },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Core(maskpar_core::Error::Config(msg.into()))
    }

    /// True for configuration problems, wherever they were raised.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Core(maskpar_core::Error::Config(_)) => true,
            Error::Record { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
