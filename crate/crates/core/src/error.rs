use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix lengths disagree with the network shape.
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid usage: {0}")]
    Usage(String),

    /// The request is well-formed but too large to honour (e.g. a Hessian above the cap).
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("numeric failure{}: {message}", fmt_walk(*seed, *step))]
    Numeric {
        message: String,
        seed: Option<u64>,
        step: Option<usize>,
    },

    #[error("ingestion error in {path}{}: {message}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Ingestion {
        path: PathBuf,
        row: Option<usize>,
        message: String,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("missing run artefacts in {dir}: {}", missing.join(", "))]
    IncompleteRun { dir: PathBuf, missing: Vec<String> },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_walk(seed: Option<u64>, step: Option<usize>) -> String {
    match (seed, step) {
        (Some(s), Some(k)) => format!(" (walk seed {s}, step {k})"),
        (Some(s), None) => format!(" (walk seed {s})"),
        (None, Some(k)) => format!(" (step {k})"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric {
            message: msg.into(),
            seed: None,
            step: None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the walk seed to a numeric failure; other variants pass through.
    pub fn with_seed(self, walk_seed: u64) -> Self {
        match self {
            Error::Numeric { message, step, .. } => Error::Numeric {
                message,
                seed: Some(walk_seed),
                step,
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Dimension { .. } | Error::Capability(_) => 1,
            Error::Ingestion { .. }
            | Error::Format { .. }
            | Error::IncompleteRun { .. }
            | Error::Io { .. } => 2,
            Error::Numeric { .. } => 3,
        }
    }
}
