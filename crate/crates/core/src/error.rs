use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("TOML error in {context}: {source}")]
    Toml {
        context: String,
        #[source]
        source: toml::de::Error,
    },

    #[error("branch {branch}: {source}")]
    Branch {
        branch: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn in_branch(self, branch: &str) -> Self {
        Error::Branch {
            branch: branch.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (config, files, shapes) as
    /// opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Branch { source, .. } => source.is_validation(),
            Error::Io { .. }
            | Error::Format(_)
            | Error::Length(_)
            | Error::Data(_)
            | Error::Shape(_)
            | Error::InvalidArgument(_)
            | Error::Validation(_)
            | Error::Json { .. }
            | Error::Toml { .. } => true,
            Error::RankDeficient(_) | Error::Degenerate(_) => false,
        }
    }
}
