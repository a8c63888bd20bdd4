use std::fmt;

use thiserror::Error;

/// Where in an input a parse problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(u64),
    LineColumn { line: u64, column: u64 },
    Byte(u64),
    Unknown,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::LineColumn { line, column } => write!(f, "line {line}, column {column}"),
            Location::Byte(b) => write!(f, "byte offset {b}"),
            Location::Unknown => write!(f, "unknown location"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm feature vector")]
    ZeroNorm,

    #[error("at query {row}, gallery {col}: {source}")]
    At {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("camera index {camera} out of range for {camera_count} cameras")]
    CameraOutOfRange { camera: usize, camera_count: usize },

    #[error("value {value} outside the allowed range {range}")]
    OutOfRange { value: f64, range: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing identity labels: {0}")]
    MissingLabels(String),

    #[error("histogram has no mass; unobserved pairs use the empty pmf")]
    EmptyHistogram,

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(location: Location, message: impl Into<String>) -> Self {
        Error::Parse {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn at(self, row: usize, col: usize) -> Self {
        Error::At {
            row,
            col,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
