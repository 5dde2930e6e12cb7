use std::fmt;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse class of an [`Error`], stable across releases and used in run
/// records and planner feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    MaskEmpty,
    StepBudgetExceeded,
    Timeout,
    AllParticlesDead,
    RemoteUnavailable,
    ProtocolError,
    ParseError,
    SchemaViolation,
    InvalidContext,
    EmptyCorpus,
    RowNotNormalized,
    UnboundVariable,
    EnumerationTooLarge,
    Io,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::MaskEmpty => "MaskEmpty",
            ErrorKind::StepBudgetExceeded => "StepBudgetExceeded",
            ErrorKind::Timeout => "Timeout",
            ErrorKind::AllParticlesDead => "AllParticlesDead",
            ErrorKind::RemoteUnavailable => "RemoteUnavailable",
            ErrorKind::ProtocolError => "ProtocolError",
            ErrorKind::ParseError => "ParseError",
            ErrorKind::SchemaViolation => "SchemaViolation",
            ErrorKind::InvalidContext => "InvalidContext",
            ErrorKind::EmptyCorpus => "EmptyCorpus",
            ErrorKind::RowNotNormalized => "RowNotNormalized",
            ErrorKind::UnboundVariable => "UnboundVariable",
            ErrorKind::EnumerationTooLarge => "EnumerationTooLarge",
            ErrorKind::Io => "Io",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The mask left no probability mass: either the allowed set is empty or
    /// the model assigns zero probability to every allowed token.
    #[error("token mask admits no probability mass{}", clause_suffix(*.clause))]
    MaskEmpty { clause: Option<usize> },

    #[error("clause exceeded its termination bound of {bound}{}", clause_suffix(*.clause))]
    StepBudgetExceeded { clause: Option<usize>, bound: u64 },

    #[error("wall-clock timeout reached")]
    Timeout,

    #[error("every particle has zero weight")]
    AllParticlesDead,

    #[error("remote backend unavailable: {0}")]
    RemoteUnavailable(String),

    #[error("protocol error: {0}")]
    ProtocolError(String),

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    InvalidContext { token: u32, vocab_size: usize },

    #[error("corpus is empty after tokenization")]
    EmptyCorpus,

    #[error("parse error at {location}: {message}")]
    ParseError { location: String, message: String },

    #[error("row {row} sums to {sum}, expected 1")]
    RowNotNormalized { row: usize, sum: f64 },

    #[error("schema violation in `{field}`: {message}")]
    SchemaViolation { field: String, message: String },

    #[error("template variable `{0}` is not bound")]
    UnboundVariable(String),

    #[error("enumeration needs up to {paths:e} paths, limit is {limit:e}")]
    EnumerationTooLarge { paths: f64, limit: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

fn clause_suffix(clause: Option<usize>) -> String {
    match clause {
        Some(i) => format!(" (clause {i})"),
        None => String::new(),
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::MaskEmpty { .. } => ErrorKind::MaskEmpty,
            Error::StepBudgetExceeded { .. } => ErrorKind::StepBudgetExceeded,
            Error::Timeout => ErrorKind::Timeout,
            Error::AllParticlesDead => ErrorKind::AllParticlesDead,
            Error::RemoteUnavailable(_) => ErrorKind::RemoteUnavailable,
            Error::ProtocolError(_) => ErrorKind::ProtocolError,
            Error::InvalidContext { .. } => ErrorKind::InvalidContext,
            Error::EmptyCorpus => ErrorKind::EmptyCorpus,
            Error::ParseError { .. } => ErrorKind::ParseError,
            Error::RowNotNormalized { .. } => ErrorKind::RowNotNormalized,
            Error::SchemaViolation { .. } => ErrorKind::SchemaViolation,
            Error::UnboundVariable(_) => ErrorKind::UnboundVariable,
            Error::EnumerationTooLarge { .. } => ErrorKind::EnumerationTooLarge,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    /// Top-level plan clause the error is attributed to, when known.
    pub fn clause(&self) -> Option<usize> {
        match self {
            Error::MaskEmpty { clause } | Error::StepBudgetExceeded { clause, .. } => *clause,
            _ => None,
        }
    }

    pub(crate) fn with_clause(self, idx: usize) -> Self {
        match self {
            Error::MaskEmpty { clause: None } => Error::MaskEmpty { clause: Some(idx) },
            Error::StepBudgetExceeded {
                clause: None,
                bound,
            } => Error::StepBudgetExceeded {
                clause: Some(idx),
                bound,
            },
            other => other,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaViolation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ParseError {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn from_json(err: &serde_json::Error) -> Self {
        Error::parse(
            format!("line {} column {}", err.line(), err.column()),
            err.to_string(),
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
