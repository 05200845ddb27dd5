use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("embedding file does not start with magic bytes \"EMB1\"")]
    BadMagic,
    #[error("embedding payload truncated: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("non-finite embedding value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("embedding dimension mismatch: {0}")]
    EmbeddingDim(String),

    #[error("landmarks for `{image_id}`: expected 68 points, found {count}")]
    WrongPointCount { image_id: String, count: usize },
    #[error("invalid landmark: {0}")]
    InvalidLandmark(String),
    #[error("mask {0}: masks must be 8-bit single-channel images")]
    MaskFormat(String),
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("attribute `{field}` = {value} lies outside [0, 1]")]
    OutOfRangeScore { field: &'static str, value: f64 },
    #[error("threshold {0} lies outside (0, 1)")]
    InvalidThreshold(f64),

    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("need {needed} eligible subjects, only {available} available")]
    InsufficientSubjects { needed: usize, available: usize },
    #[error("subject `{subject}` has {available} {kind} images, {needed} required")]
    InsufficientImages {
        subject: String,
        kind: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate triangle in landmark triangulation")]
    DegenerateTriangle,
    #[error("landmark {index} at ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBoundsLandmark {
        index: usize,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("degenerate region polygon")]
    DegeneratePolygon,
    #[error("no landmarks for image `{0}`")]
    MissingLandmarks(String),
    #[error("no facial-hair mask for image `{0}`")]
    MissingMask(String),

    #[error("report has nothing to render")]
    EmptyReport,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for failures of the filesystem or OS rather than of the inputs' content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            Error::Json(e) => e.is_io(),
            Error::Image { source, .. } => matches!(source, image::ImageError::IoError(_)),
            _ => false,
        }
    }
}
