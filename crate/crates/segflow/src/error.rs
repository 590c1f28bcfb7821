//! Error type shared across the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by construction, transport, estimation, and I/O.
#[derive(Debug)]
pub enum Error {
    /// An argument is outside its mathematical domain (α, t, w ranges).
    Domain(String),
    /// Invalid configuration: bad dimensions, insufficient grid support,
    /// malformed config files, unknown variants.
    Config(String),
    /// The α-density has Δ = c00·c11 − c01² below the minimum; the
    /// regression endpoints are not identifiable.
    DegenerateDensity(String),
    /// A NaN/Inf appeared during evaluation or integration.
    NonFinite {
        context: String,
        step: Option<usize>,
    },
    /// A Monte-Carlo estimate has too little effective support to trust.
    UnreliableEstimate(String),
    /// Quadrature range/resolution cannot deliver the requested accuracy.
    Precision(String),
    /// Two point sets that must share an α grid do not.
    Contract(String),
    /// One or more diagnostic checks failed (values are in the report).
    DiagnosticsFailed(usize),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::DegenerateDensity(msg) => write!(f, "degenerate density: {msg}"),
            Error::NonFinite { context, step } => match step {
                Some(s) => write!(f, "non-finite value at step {s}: {context}"),
                None => write!(f, "non-finite value: {context}"),
            },
            Error::UnreliableEstimate(msg) => write!(f, "unreliable estimate: {msg}"),
            Error::Precision(msg) => write!(f, "precision error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::DiagnosticsFailed(n) => write!(f, "{n} diagnostic check(s) failed"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
