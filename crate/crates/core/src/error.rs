use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty tag inventory")]
    EmptyInventory,

    /// A malformed line in any of the text formats. `line` is 1-based.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown tag `{0}`")]
    UnknownTag(String),

    #[error("no conversion rule matches reading `{0}`")]
    NoMatchingRule(String),

    #[error("reading `{reading}` is matched equally well by rules producing {first} and {second}")]
    AmbiguousReading {
        reading: String,
        first: String,
        second: String,
    },

    #[error("inconsistent prior: tag {0} has zero prior but non-zero conditional probability")]
    InconsistentPrior(String),

    #[error("unknown state index {0}")]
    UnknownState(usize),

    #[error("dead lattice at t={position} (token `{token}`): every path has zero probability")]
    DeadLattice { position: usize, token: String },

    #[error("corpus too small: need {needed} words, have {available} (deficit {})", needed - available)]
    InsufficientCorpus { needed: usize, available: usize },

    #[error("corpora diverge at sentence {sentence}, token {token}: {message}")]
    Mismatch {
        sentence: usize,
        token: usize,
        message: String,
    },

    #[error("invalid value for {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 2 for anything caused by
    /// bad input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DeadLattice { .. } | Error::InconsistentPrior(_) | Error::UnknownState(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
