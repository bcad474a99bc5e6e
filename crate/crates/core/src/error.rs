use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite loss at probe point")]
    Probe,

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("word `{0}` has no pronunciation in the lexicon")]
    LexiconGap(String),

    #[error("infeasible CTC target: {frames} frames cannot emit {labels} labels with {repeats} adjacent repeats")]
    InfeasibleTarget {
        frames: usize,
        labels: usize,
        repeats: usize,
    },

    #[error("brute-force enumeration of {0} paths exceeds the oracle limit")]
    OracleScale(f64),

    #[error("empty input sequence")]
    EmptyInput,

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("reference/hypothesis count mismatch: {refs} references, {hyps} hypotheses")]
    Pairing { refs: usize, hyps: usize },

    #[error("rate undefined on an empty corpus")]
    UndefinedRate,

    #[error("vocabulary fingerprint mismatch: {0}")]
    Composition(String),

    #[error("stage violation: expected {expected}, found {found}")]
    Stage { expected: String, found: String },

    #[error("strategy `{0}` is not supported for this network")]
    UnsupportedStrategy(String),

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { .. } | Error::Composition(_) | Error::UnsupportedStrategy(_) => 4,
            Error::Probe
            | Error::NonFiniteGradient(_)
            | Error::Numeric(_)
            | Error::OracleScale(_) => 5,
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
