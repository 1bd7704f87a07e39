use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("target unreachable: wrist distance {distance:.6} m outside [{inner:.6}, {outer:.6}]")]
    Unreachable {
        distance: f64,
        inner: f64,
        outer: f64,
    },

    #[error("path point {index} unreachable for arm {arm}: {source}")]
    UnreachablePoint {
        index: usize,
        arm: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("rank-deficient design matrix (rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },

    #[error(
        "joint {joint}: {kind} limits must satisfy lower < 0 < upper (got [{lower}, {upper}])"
    )]
    LimitSign {
        joint: usize,
        kind: &'static str,
        lower: f64,
        upper: f64,
    },

    #[error("trajectory has zero path derivatives everywhere; path speed is unbounded")]
    UnboundedSpeed,

    #[error("path error is not differentiable here: {0}")]
    NonSmoothPoint(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
