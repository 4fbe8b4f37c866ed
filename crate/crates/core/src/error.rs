//! Error types shared across the engine.

use thiserror::Error;

/// A single scene-graph validation violation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationIssue {
    #[error("non-positive dimensions {width}x{height}")]
    NonPositiveDimensions { width: i64, height: i64 },
    #[error("object {id}: inverted bbox ({detail})")]
    InvertedBbox { id: u64, detail: String },
    #[error("object {id}: non-finite bbox coordinate")]
    NonFiniteBbox { id: u64 },
    #[error("object {id}: negative bbox coordinate ({detail})")]
    NegativeCoordinate { id: u64, detail: String },
    #[error("object {id}: bbox out of image bounds ({detail})")]
    OutOfBounds { id: u64, detail: String },
    #[error("duplicate object id {id}")]
    DuplicateObjectId { id: u64 },
    #[error("object {id}: empty category")]
    EmptyCategory { id: u64 },
    #[error("object {id}: label contains reserved character {ch:?}")]
    ReservedLabelCharacter { id: u64, ch: char },
    #[error("relationship {index}: dangling reference to object {id}")]
    DanglingReference { index: usize, id: u64 },
    #[error("relationship {index}: self-loop on object {id}")]
    SelfLoop { index: usize, id: u64 },
    #[error("relationship {index}: empty predicate")]
    EmptyPredicate { index: usize },
    #[error("relationship {index}: predicate contains reserved character {ch:?}")]
    ReservedPredicateCharacter { index: usize, ch: char },
    #[error("point out of bounds: {coordinate} = {value} not in [0, {limit}]")]
    PointOutOfBounds {
        coordinate: &'static str,
        value: f64,
        limit: f64,
    },
}

/// The complete list of violations found while validating one record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn push(&mut self, issue: ValidationIssue) {
        self.issues.push(issue);
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for issue in &self.issues {
            if !first {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(ValidationReport),
    #[error("{context}: dimension mismatch, expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unknown {kind} label {label:?}")]
    UnknownLabel { kind: &'static str, label: String },
    #[error("degenerate query: zero-norm vector")]
    DegenerateQuery,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("no tokens found in text {text:?}")]
    EmptyTokenStream { text: String },
    #[error("embedding is the zero vector")]
    ZeroVector,
    #[error("embedding dimension {dim} below minimum of 8")]
    DimensionTooSmall { dim: usize },
    #[error("chunk from image {chunk_image:?} rejected by index for image {index_image:?}")]
    CrossImageChunk {
        chunk_image: String,
        index_image: String,
    },
    #[error("provider {provider}: {message}")]
    Provider { provider: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cassette miss for digest {digest}")]
    CassetteMiss { digest: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("image id mismatch: predicted {predicted:?}, ground truth {ground_truth:?}")]
    ImageIdMismatch {
        predicted: String,
        ground_truth: String,
    },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Unwraps stage wrappers down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
