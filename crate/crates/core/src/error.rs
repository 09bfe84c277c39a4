//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("record at line {line} has no id (strict mode requires one)")]
    MissingId { line: usize },

    #[error("duplicate sample id {id:?}")]
    DuplicateId { id: String },

    #[error("sample {id:?} has empty code")]
    EmptyCode { id: String },

    #[error("empty dataset: {context}")]
    EmptyDataset { context: String },

    #[error("invalid parameter {name}: {message}")]
    InvalidParam { name: String, message: String },

    #[error("unknown mode {name:?} (expected one of: {expected})")]
    UnknownMode { name: String, expected: String },

    #[error("model file {path}: {message}")]
    ModelFormat { path: PathBuf, message: String },

    #[error("tokenizer mode mismatch: model was trained with {model_mode}, requested {requested}")]
    TokenizerModeMismatch {
        model_mode: String,
        requested: String,
    },

    #[error("empty token sequence cannot be scored")]
    EmptySequence,

    #[error(
        "not enough eligible samples: attack needs {requested} but only {eligible} are mutable"
    )]
    NotEnoughEligible { requested: usize, eligible: usize },

    #[error("no eligible identifier in code")]
    NoEligibleIdentifier,

    #[error("malformed grammar: {message}")]
    MalformedGrammar { message: String },

    #[error("id {id:?} is not part of the dataset")]
    UnknownId { id: String },

    #[error("invalid sweep: {message}")]
    InvalidSweep { message: String },

    #[error("record serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid_param(name: &str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.to_string(),
            message: message.into(),
        }
    }
}
