use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick a process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient history: {needed} observations required, {available} available")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("segment too short: need at least {needed} states, got {actual}")]
    SegmentTooShort { needed: usize, actual: usize },
    #[error("window end {t} precedes the history length {history}")]
    WindowOutOfRange { t: usize, history: usize },
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },
    #[error("model {member} produced a non-finite prediction at rollout step {step}")]
    RolloutNonFinite { member: usize, step: usize },
    #[error("not a WSBC dataset (bad magic)")]
    BadMagic,
    #[error("not a WSBC weight file (bad magic)")]
    BadWeightMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected end of payload at episode {episode}")]
    TruncatedPayload { episode: usize },
    #[error("unexpected end of header")]
    TruncatedHeader,
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("hash mismatch for {artifact}: expected {expected}, found {found}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("constraint violated at coordinate {index}: |θ - ψ| = {distance} > d = {radius}")]
    ConstraintViolated {
        index: usize,
        distance: f64,
        radius: f64,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite { .. } | Error::Diverged { .. } | Error::RolloutNonFinite { .. } => {
                ErrorKind::Numeric
            }
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}

pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(index) => Err(Error::NonFinite { context, index }),
    }
}
