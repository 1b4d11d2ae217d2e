use std::path::PathBuf;

use crate::taxonomy::ConceptId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("cycle detected through concept {0:?}")]
    Cycle(String),

    #[error("no embedding for concept {0:?}")]
    MissingEmbedding(String),

    #[error("embedding for {name:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate concept name {0:?}")]
    DuplicateName(String),

    #[error("unknown concept id {0}")]
    UnknownConcept(ConceptId),

    #[error("unknown concept name {0:?}")]
    UnknownName(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("query {query} has {eligible} eligible negatives, {requested} requested")]
    InsufficientNegatives {
        query: ConceptId,
        eligible: usize,
        requested: usize,
    },

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("anchor cache was built for different parameters or taxonomy")]
    StaleCache,

    #[error("gold parent {parent} of query {query:?} is not a candidate anchor")]
    MissingGoldParent { query: String, parent: ConceptId },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Diverged { .. })
    }
}
