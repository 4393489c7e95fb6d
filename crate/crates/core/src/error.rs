use thiserror::Error;

/// Errors raised by the layer and training primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Incompatible extents between operands.
    #[error("shape error: {0}")]
    Shape(String),
    /// An argument outside its documented domain (empty input, non-positive width, ...).
    #[error("argument error: {0}")]
    Argument(String),
    /// A structurally invalid model or policy configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// The supplied data cannot satisfy the request (too few samples, ...).
    #[error("data error: {0}")]
    Data(String),
    /// A non-finite value was produced or encountered.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    /// Short machine-readable class name, stable across releases.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Argument(_) => "argument",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Numeric(_) => "numeric",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use shape_err;
