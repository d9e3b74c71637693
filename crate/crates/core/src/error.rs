use std::path::PathBuf;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("facet `{facet}` is not part of schema `{schema}`")]
    UnknownFacet { facet: String, schema: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing unit: {0}")]
    MissingUnit(String),

    #[error("missing embeddings for {} id(s): {}", .0.len(), .0.join(", "))]
    CoverageGap(Vec<String>),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(
        "stage `{stage}` incomplete: {completed} of {total} finished; {hint}"
    )]
    Partial {
        stage: String,
        completed: usize,
        total: usize,
        hint: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Process exit code: 1 validation, 2 backend failure, 3 partial completion.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend(_) => 2,
            Error::Partial { .. } => 3,
            _ => 1,
        }
    }
}
