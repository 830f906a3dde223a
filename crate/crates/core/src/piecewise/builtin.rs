use serde::{Deserialize, Serialize};

use super::{Continuity, EndpointSpec, PieceShape, PiecewiseFn, PiecewiseSpec};
use crate::error::PiecewiseError;

/// Built-in penalties, as written in configuration files:
/// `{"kind": "capped_l1", "params": {"lambda": 0.2, "b": 1.0}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// `lambda * min(|x|, b)`
    CappedL1 { lambda: f64, b: f64 },
    /// `lambda * min(|x|, b) + beta * max(|x| - b, 0)` with `beta < lambda`.
    LeakyCappedL1 { lambda: f64, b: f64, beta: f64 },
    /// `lambda * 1{x < tau}`
    Indicator { lambda: f64, tau: f64 },
    /// `lambda * 1{x != 0}`
    L0 { lambda: f64 },
    /// `lambda * |x|`
    L1 { lambda: f64 },
    /// Identically zero.
    Zero,
}

fn positive(name: &str, v: f64) -> Result<(), PiecewiseError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(PiecewiseError::Parameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl PenaltySpec {
    pub fn to_spec(&self) -> Result<PiecewiseSpec, PiecewiseError> {
        use Continuity::*;
        let spec = match *self {
            PenaltySpec::CappedL1 { lambda, b } => {
                positive("lambda", lambda)?;
                positive("b", b)?;
                PiecewiseSpec {
                    pieces: vec![
                        PieceShape::constant(lambda * b),
                        PieceShape::Abs {
                            offset: 0.0,
                            weight: lambda,
                            center: 0.0,
                        },
                        PieceShape::constant(lambda * b),
                    ],
                    endpoints: vec![
                        EndpointSpec::new(-b, Continuous),
                        EndpointSpec::new(b, Continuous),
                    ],
                }
            }
            PenaltySpec::LeakyCappedL1 { lambda, b, beta } => {
                positive("lambda", lambda)?;
                positive("b", b)?;
                if !(beta >= 0.0 && beta < lambda) {
                    return Err(PiecewiseError::Parameter(format!(
                        "beta must lie in [0, lambda), got {beta}"
                    )));
                }
                let offset = (lambda - beta) * b;
                PiecewiseSpec {
                    pieces: vec![
                        PieceShape::Affine {
                            offset,
                            slope: -beta,
                        },
                        PieceShape::Abs {
                            offset: 0.0,
                            weight: lambda,
                            center: 0.0,
                        },
                        PieceShape::Affine {
                            offset,
                            slope: beta,
                        },
                    ],
                    endpoints: vec![
                        EndpointSpec::new(-b, Continuous),
                        EndpointSpec::new(b, Continuous),
                    ],
                }
            }
            PenaltySpec::Indicator { lambda, tau } => {
                positive("lambda", lambda)?;
                if !tau.is_finite() {
                    return Err(PiecewiseError::Parameter(format!(
                        "tau must be finite, got {tau}"
                    )));
                }
                PiecewiseSpec {
                    pieces: vec![PieceShape::constant(lambda), PieceShape::constant(0.0)],
                    endpoints: vec![EndpointSpec::new(tau, RightOnly)],
                }
            }
            PenaltySpec::L0 { lambda } => {
                positive("lambda", lambda)?;
                PiecewiseSpec {
                    pieces: vec![
                        PieceShape::constant(lambda),
                        PieceShape::constant(0.0),
                        PieceShape::constant(lambda),
                    ],
                    endpoints: vec![
                        EndpointSpec::new(0.0, Isolated),
                        EndpointSpec::new(0.0, Isolated),
                    ],
                }
            }
            PenaltySpec::L1 { lambda } => {
                positive("lambda", lambda)?;
                PiecewiseSpec {
                    pieces: vec![PieceShape::Abs {
                        offset: 0.0,
                        weight: lambda,
                        center: 0.0,
                    }],
                    endpoints: vec![],
                }
            }
            PenaltySpec::Zero => PiecewiseSpec {
                pieces: vec![PieceShape::constant(0.0)],
                endpoints: vec![],
            },
        };
        Ok(spec)
    }

    pub fn build(&self) -> Result<PiecewiseFn, PiecewiseError> {
        PiecewiseFn::build(self.to_spec()?)
    }
}
