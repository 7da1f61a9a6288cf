use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("category ids must be dense: expected {expected}, found {found}")]
    NonDenseIds { expected: usize, found: u16 },
    #[error("duplicate category name {0:?}")]
    DuplicateName(String),
    #[error("category {name:?}: {detail}")]
    InconsistentRoles { name: String, detail: String },
    #[error("exactly one category must have the room role, found {0}")]
    RoomCount(usize),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("resolution {0} must be a positive multiple of 4")]
    BadResolution(u32),
    #[error("dataset bounds are degenerate")]
    BadBounds,
    #[error("orientation {0} outside (-pi, pi]")]
    OrientationOutOfRange(f64),
    #[error("room dimension {value} outside [{min}, {max}]")]
    RoomOutOfBounds { value: f64, min: f64, max: f64 },
    #[error("layout has {0} objects, more than the sequence can hold")]
    TooManyObjects(usize),
    #[error("layout has no room object")]
    MissingRoom,
    #[error("cell size must be positive, got {0}")]
    BadCell(f64),
    #[error("malformed sequence at token {position}: {reason}")]
    Malformed { position: usize, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum ErgoError {
    #[error("viewer and target coincide")]
    Degenerate,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported interchange version {version}")]
    Version { path: String, version: u32 },
    #[error("{path}: unknown category {name:?}")]
    UnknownCategory { path: String, name: String },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("corpus is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
