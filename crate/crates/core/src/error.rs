use std::path::PathBuf;

use thiserror::Error;

use crate::piecewise::Continuity;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid piecewise function: {0}")]
    Piecewise(#[from] PiecewiseError),

    #[error("proximal step failed: {0}")]
    Prox(#[from] ProxError),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite objective at iteration {iteration}; the step size is likely too large")]
    NonFiniteObjective { iteration: usize },

    #[error("negative-curvature exploitation found no endpoint of piece {piece} between {w} and {z} on coordinate {coordinate}")]
    MissingEndpoint {
        coordinate: usize,
        piece: usize,
        w: f64,
        z: f64,
    },

    #[error("step-size certificate: {0}")]
    Certificate(String),

    #[error("IDX format: {0}")]
    Idx(String),

    #[error("CSV: {0}")]
    Csv(String),

    #[error("config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Validation failures raised while building a [`crate::piecewise::PiecewiseFn`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PiecewiseError {
    #[error("need {expected} endpoints for {pieces} pieces, got {got}")]
    EndpointCount {
        pieces: usize,
        expected: usize,
        got: usize,
    },

    #[error("endpoint {index} is not finite")]
    NonFiniteEndpoint { index: usize },

    #[error("pieces overlap at {at}: {reason}")]
    Overlap { at: f64, reason: String },

    #[error("no piece owns the point {at}")]
    Gap { at: f64 },

    #[error("f is neither left nor right continuous at {at} (left limit {left}, value {value}, right limit {right})")]
    NeitherContinuity {
        at: f64,
        left: f64,
        value: f64,
        right: f64,
    },

    #[error("endpoint {at} declared {declared:?} but limits are left {left}, right {right}")]
    ContinuityMismatch {
        at: f64,
        declared: Continuity,
        left: f64,
        right: f64,
    },

    #[error("f is not lower semicontinuous at {at}")]
    NotLowerSemicontinuous { at: f64 },

    #[error("piece {piece} is not convex: {reason}")]
    NonConvexPiece { piece: usize, reason: String },

    #[error("no negative curvature at continuous endpoint {at}: slope gap {gap}")]
    NoNegativeCurvature { at: f64, gap: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("custom pieces cannot be serialized")]
    NotSerializable,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProxError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),

    #[error("could not bracket a minimizer near {x}")]
    Bracket { x: f64 },

    #[error("objective is not finite at {at}")]
    NonFinite { at: f64 },

    #[error("coordinate {coordinate}: {source}")]
    Coordinate {
        coordinate: usize,
        #[source]
        source: Box<ProxError>,
    },
}
