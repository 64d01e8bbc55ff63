use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ASU value {0} outside [0, 31]")]
    AsuOutOfRange(i64),

    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rows are not sorted by timestamp (t={current} follows t={previous})")]
    UnsortedRows { previous: i64, current: i64 },

    #[error("scan at t={timestamp} has {count} distinct towers, more than {max}")]
    TooManyReadings { timestamp: i64, count: usize, max: usize },

    #[error("scan at t={0} has no readings")]
    EmptyScan(i64),

    #[error("scan at t={0} has no ground truth")]
    MissingTruth(i64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("radio map has no cells")]
    EmptyMap,

    #[error("radio map was built without fingerprint points")]
    PointsStripped,

    #[error("radio map carries no tower locations")]
    NoTowerLocations,

    #[error("tower {0} has no known location")]
    UnknownTowerLocation(String),

    #[error("no observed tower is covered by the model")]
    NoModeledTower,

    #[error("dropping towers would leave the map empty")]
    AllTowersDropped,

    #[error("Cholesky factorization failed after jitter retries")]
    Factorization,

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("wrong document kind {found:?} (expected {expected:?})")]
    WrongKind { found: String, expected: &'static str },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
