use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("invalid document: {0}")]
    InvalidDocument(String),

    #[error("InvalidSpan: {0}")]
    InvalidSpan(String),

    #[error("InvalidRelation: {0}")]
    InvalidRelation(String),

    #[error("UnalignableSpan: characters {start}..{end} cover no token")]
    UnalignableSpan { start: usize, end: usize },

    #[error("OverlappingMentions: mentions {first:?} and {second:?} share a token")]
    OverlappingMentions {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("loss is not finite")]
    NonFiniteLoss,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("empty input sequence")]
    EmptySequence,

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint role mismatch: expected {expected}, found {found}")]
    RoleMismatch { expected: String, found: String },

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("need at least 2 documents to split train/validation, got {0}")]
    TooFewDocuments(usize),

    #[error("document `{0}` has no tokens after truncation")]
    EmptyAfterTruncation(String),

    #[error("vocabulary hash {found:016x} does not match the model's {expected:016x}")]
    VocabularyMismatch { expected: u64, found: u64 },

    #[error("no document carries a gold relation")]
    NoPositives,

    #[error("gold and predicted document ids differ (first mismatch: `{0}`)")]
    DocumentIdMismatch(String),

    #[error("no unlabeled documents available for self-training")]
    NoUnlabeledDocuments,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("RevisionConflict: `{id}` is at revision {current}, update was based on {expected}")]
    RevisionConflict {
        id: String,
        expected: String,
        current: String,
    },

    #[error("project is locked by another command ({0}); remove the file if no command is running")]
    Locked(PathBuf),

    #[error("model unavailable: {0}")]
    ModelUnavailable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

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

    /// Short name of the violated invariant, used in HTTP error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyCorpus => "EmptyCorpus",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::InvalidDocument(_) => "InvalidDocument",
            Error::InvalidSpan(_) => "InvalidSpan",
            Error::InvalidRelation(_) => "InvalidRelation",
            Error::UnalignableSpan { .. } => "UnalignableSpan",
            Error::OverlappingMentions { .. } => "OverlappingMentions",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NonFiniteLoss => "NonFiniteLoss",
            Error::IdOutOfRange { .. } => "IdOutOfRange",
            Error::EmptySequence => "EmptySequence",
            Error::Format(_) => "FormatError",
            Error::RoleMismatch { .. } => "RoleMismatch",
            Error::TensorShapeMismatch { .. } => "TensorShapeMismatch",
            Error::TooFewDocuments(_) => "TooFewDocuments",
            Error::EmptyAfterTruncation(_) => "EmptyAfterTruncation",
            Error::VocabularyMismatch { .. } => "VocabularyMismatch",
            Error::NoPositives => "NoPositives",
            Error::DocumentIdMismatch(_) => "DocumentIdMismatch",
            Error::NoUnlabeledDocuments => "NoUnlabeledDocuments",
            Error::Config(_) => "ConfigError",
            Error::NotFound(_) => "NotFound",
            Error::RevisionConflict { .. } => "RevisionConflict",
            Error::Locked(_) => "ProjectLocked",
            Error::ModelUnavailable(_) => "ModelUnavailable",
            Error::Io { .. } => "IoError",
            Error::File { .. } => "FileError",
            Error::Json(_) => "ParseError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
