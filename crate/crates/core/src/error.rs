//! Error taxonomy for the whole library.
//!
//! Every fallible operation returns [`Error`]. The variants separate the
//! caller's responsibilities: `Schema` and `Law` blame the input description,
//! `Domain` blames the arguments of an otherwise valid query, `Solver` means a
//! numerical routine failed to certify its answer, and `Unsupported` marks
//! documented scope limits (for example dimensions above three in exact hull
//! construction).

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// The JSON law description violates the input schema.
    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },

    /// The law is syntactically valid but mathematically inadmissible.
    #[error("invalid law: {0}")]
    Law(String),

    /// A numerical solver could not certify a root or minimum.
    #[error("solver failure in {what}: residual {residual:.3e}")]
    Solver { what: String, residual: f64 },

    /// The query arguments lie outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is outside the documented scope of the library.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// Shorthand for a schema violation.
    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { field: field.into(), message: message.into() }
    }

    /// Shorthand for a solver failure.
    pub fn solver(what: impl Into<String>, residual: f64) -> Self {
        Error::Solver { what: what.into(), residual }
    }
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
