use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A file did not conform to its documented format.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A selection category has fewer candidates than requested.
    #[error("not enough {category} candidates: requested {requested}, available {available}")]
    InsufficientCandidates {
        category: &'static str,
        requested: usize,
        available: usize,
    },

    /// Every non-pivot with positive sampling mass is excluded.
    #[error("negative sampler exhausted: {0}")]
    SamplerExhausted(String),

    /// A numerical quantity became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the failure is numerical (drives the CLI's exit code 2).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
