use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("length mismatch in {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("adversarial function present without an adversary target")]
    MissingAdversaryTarget,

    #[error("solver did not converge after {iterations} iterations (gradient-mapping norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("brute-force search unsupported: {0}")]
    BruteForceUnsupported(String),

    #[error("slot {slot}: policy read the adversary target before acting")]
    Protocol { slot: usize },

    #[error("slot {slot}: action outside the domain box")]
    OutOfDomain { slot: usize },

    #[error("{source_name}:{line}: {reason}")]
    Parse {
        source_name: String,
        line: u64,
        reason: String,
    },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("missing results for {0:?}")]
    MissingBaselines(Vec<String>),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            field,
            reason: reason.into(),
        }
    }
}
