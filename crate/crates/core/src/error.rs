use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user-supplied configuration or precondition.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// A policy puts mass on an action the behavior model never takes.
    #[error("agent {agent} in state {state} puts mass on action {action} outside the behavior support")]
    SupportViolation {
        agent: usize,
        state: usize,
        action: usize,
    },

    #[error("{what} did not converge within {iters} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("game fingerprint mismatch: dataset has {found}, game is {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Numeric failures map to a distinct process exit code in the CLI.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}
