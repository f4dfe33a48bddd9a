use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("document `{doc_id}`: segmentation leaves an empty side")]
    EmptySide { doc_id: String },

    #[error("unknown part boundary `{0}`")]
    UnknownBoundary(String),

    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("no token of the sequence is in the vocabulary")]
    AllTokensOov,

    #[error("unknown document id `{0}`")]
    UnknownId(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sequence of {valid_len} tokens is shorter than kernel width {width}")]
    SequenceTooShort { valid_len: usize, width: usize },

    #[error("forward trace does not match the encoder parameters")]
    TraceMismatch,

    #[error("cosine similarity of a zero vector")]
    ZeroVector,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("corpus has {0} documents, at least 2 are needed")]
    CorpusTooSmall(usize),

    #[error("fingerprint mismatch: {0}")]
    FingerprintMismatch(String),

    #[error("query `{0}` has no relevant documents")]
    EmptyJudgments(String),

    #[error("query `{0}` is not present in the judgments")]
    UnknownQuery(String),

    #[error("malformed run file at line {line}: {message}")]
    MalformedRun { line: usize, message: String },

    #[error("invalid file format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
