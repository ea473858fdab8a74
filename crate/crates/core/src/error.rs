use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Parse failures for the binary interchange formats.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload")]
    Truncated,
    #[error("expected 4 stages, found {0}")]
    StageCount(u8),
    #[error("non-finite value in payload at index {0}")]
    NonFinite(usize),
    #[error("invalid label byte {0}")]
    InvalidLabel(u8),
    #[error("invalid mask value {value} at index {index}")]
    InvalidMaskValue { index: usize, value: u8 },
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid UTF-8 in prompt string")]
    InvalidUtf8,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("{path}: missing required fields: {}", fields.join(", "))]
    Schema { path: PathBuf, fields: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("undefined {metric}{}: {reason}", context.as_deref().map(|c| format!(" for {c}")).unwrap_or_default())]
    UndefinedMetric {
        metric: &'static str,
        reason: String,
        context: Option<String>,
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
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            source,
        }
    }

    /// Attaches a class (or other) context to undefined-metric errors.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::UndefinedMetric { metric, reason, .. } => Error::UndefinedMetric {
                metric,
                reason,
                context: Some(ctx.into()),
            },
            Error::Data(msg) => Error::Data(format!("{}: {msg}", ctx.into())),
            other => other,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema { .. } | Error::Json { .. } => 2,
            Error::UndefinedMetric { .. } => 4,
            Error::Contract(_) | Error::Format { .. } | Error::Data(_) | Error::Io { .. } => 3,
        }
    }
}
