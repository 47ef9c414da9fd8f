use std::path::{Path, PathBuf};

/// Errors surfaced by the tools, grouped by the exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// 1 usage, 2 data, 3 stage failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } | Error::Data(_) => 2,
            Error::Stage { .. } => 3,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io { path: path.to_path_buf(), source }
    }

    pub fn data(e: impl std::fmt::Display) -> Error {
        Error::Data(e.to_string())
    }

    pub fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> Error {
        move |e| Error::Stage { stage, message: e.to_string() }
    }
}
