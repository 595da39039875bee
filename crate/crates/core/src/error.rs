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

    #[error("{malformed} of {rows} rows malformed (more than 1%), wrong file format?")]
    TooManyMalformed { rows: usize, malformed: usize },

    #[error("malformed date {0:?}")]
    BadDate(String),

    #[error("duplicate tweet id {0}")]
    DuplicateId(u64),

    #[error("corpus is not fully labeled")]
    Unlabeled,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("term not in vocabulary (document frequency 0)")]
    UnknownTerm,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no bursty word found")]
    NoBurst,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model expects {expected} input, got {got}")]
    Representation {
        expected: &'static str,
        got: &'static str,
    },

    #[error("vocabulary hash mismatch: model {model}, supplied {supplied}")]
    VocabMismatch { model: String, supplied: String },

    #[error("bad model container: {0}")]
    Container(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::TooManyMalformed { .. } => "malformed_input",
            Error::BadDate(_) => "bad_date",
            Error::DuplicateId(_) => "duplicate_id",
            Error::Unlabeled => "unlabeled",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnknownTerm => "unknown_term",
            Error::Empty(_) => "empty_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Parse { .. } => "parse",
            Error::NoBurst => "no_burst",
            Error::Diverged(_) => "diverged",
            Error::Representation { .. } => "representation_mismatch",
            Error::VocabMismatch { .. } => "vocab_mismatch",
            Error::Container(_) => "container",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
