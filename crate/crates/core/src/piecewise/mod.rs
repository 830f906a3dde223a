//! Piecewise convex univariate functions.
//!
//! A [`PiecewiseFn`] partitions ℝ into ordered convex pieces `R_1, …, R_M`
//! separated by endpoints `q_1 ≤ … ≤ q_{M-1}`. Each endpoint carries a
//! [`Continuity`] tag which decides which neighbouring piece owns it, so
//! every real number belongs to exactly one piece. A repeated endpoint
//! value encodes a single-point piece `{q}`.
//!
//! Construction validates the partition and the tags against the piece
//! evaluators, then derives the structural constants used by the step-size
//! theory (curvature gap `C`, jump `J`, slope bound `F0`, minimum length
//! `R0` and differentiability margin `s0`) and the per-piece surrogates.

mod builtin;
mod shape;
mod surrogate;

use serde::{Deserialize, Serialize};

pub use builtin::PenaltySpec;
pub use shape::{soft_threshold, CustomShape, PieceShape, SLOPE_FD_STEP};
pub use surrogate::{Branch, Extension, SurrogateFn};

use crate::error::PiecewiseError;
use shape::clip_interval;

/// One-sided continuity of `f` at an endpoint.
///
/// `Continuous` and `LeftOnly` endpoints belong to the piece on their left,
/// `RightOnly` endpoints to the piece on their right. `Isolated` is only
/// valid next to a single-point piece, which then owns the point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuity {
    Continuous,
    LeftOnly,
    RightOnly,
    Isolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub value: f64,
    pub continuity: Continuity,
}

impl EndpointSpec {
    pub fn new(value: f64, continuity: Continuity) -> Self {
        EndpointSpec { value, continuity }
    }
}

/// Serializable description of a piecewise function: `M` shapes and `M - 1`
/// endpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseSpec {
    pub pieces: Vec<PieceShape>,
    #[serde(default)]
    pub endpoints: Vec<EndpointSpec>,
}

/// One end of a piece; `value` may be infinite, in which case it is open.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub closed: bool,
}

impl Bound {
    fn open(value: f64) -> Self {
        Bound {
            value,
            closed: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Piece {
    /// 1-based piece index.
    pub index: usize,
    pub shape: PieceShape,
    pub lower: Bound,
    pub upper: Bound,
    /// `v+`: derivative limit at the lower end from inside. NaN when unbounded.
    pub lower_slope: f64,
    /// `v-`: derivative limit at the upper end from inside. NaN when unbounded.
    pub upper_slope: f64,
}

impl Piece {
    pub fn contains(&self, x: f64) -> bool {
        let above = x > self.lower.value || (x == self.lower.value && self.lower.closed);
        let below = x < self.upper.value || (x == self.upper.value && self.upper.closed);
        above && below
    }

    pub fn length(&self) -> f64 {
        self.upper.value - self.lower.value
    }

    pub fn is_single_point(&self) -> bool {
        self.lower.value == self.upper.value
    }

    fn lies_left_of(&self, x: f64) -> bool {
        self.upper.value < x || (self.upper.value == x && !self.upper.closed)
    }
}

/// A validated endpoint with the limits of `f` on either side.
#[derive(Clone, Copy, Debug)]
pub struct Endpoint {
    pub value: f64,
    pub continuity: Continuity,
    /// 1-based index of the piece that owns the point.
    pub owner: usize,
    pub left_limit: f64,
    pub right_limit: f64,
    /// `f(q)`.
    pub f_value: f64,
}

impl Endpoint {
    pub fn is_continuous(&self) -> bool {
        self.continuity == Continuity::Continuous
    }
}

/// Constants entering the step-size bounds. `+inf` marks an empty minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    /// `C`: minimum slope drop across continuous endpoints.
    pub curvature_gap: f64,
    /// `J`: minimum jump at discontinuous endpoints.
    pub jump: f64,
    /// `F0`: bound on `|f'|` over piece interiors.
    pub slope_bound: f64,
    /// `R0`: minimum length over pieces of nonzero length.
    pub min_length: f64,
    /// `s0`: width around each endpoint on which `f` is differentiable.
    pub margin: f64,
}

/// Validated piecewise convex function with its surrogates precomputed.
#[derive(Clone, Debug)]
pub struct PiecewiseFn {
    spec: PiecewiseSpec,
    pieces: Vec<Piece>,
    endpoints: Vec<Endpoint>,
    constants: StructuralConstants,
    surrogates: Vec<SurrogateFn>,
}

/// Grid points per piece for the convexity probe.
const PROBE_POINTS: usize = 1000;
const PROBE_TOL: f64 = 1e-10;

fn value_tol(vals: &[f64]) -> f64 {
    1e-9 * (1.0 + vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

impl PiecewiseFn {
    /// Validates `spec` and builds the function.
    pub fn build(spec: PiecewiseSpec) -> Result<Self, PiecewiseError> {
        let m_count = spec.pieces.len();
        if m_count == 0 {
            return Err(PiecewiseError::Parameter(
                "at least one piece is required".into(),
            ));
        }
        let qs = &spec.endpoints;
        if qs.len() != m_count - 1 {
            return Err(PiecewiseError::EndpointCount {
                pieces: m_count,
                expected: m_count - 1,
                got: qs.len(),
            });
        }
        for (i, e) in qs.iter().enumerate() {
            if !e.value.is_finite() {
                return Err(PiecewiseError::NonFiniteEndpoint { index: i });
            }
        }
        for w in qs.windows(2) {
            if w[1].value < w[0].value {
                return Err(PiecewiseError::Overlap {
                    at: w[1].value,
                    reason: format!(
                        "endpoints {} and {} are out of order",
                        w[0].value, w[1].value
                    ),
                });
            }
        }
        for w in qs.windows(3) {
            if w[0].value == w[2].value {
                return Err(PiecewiseError::Overlap {
                    at: w[0].value,
                    reason: "more than one single-point piece at the same location".into(),
                });
            }
        }
        for (i, shape) in spec.pieces.iter().enumerate() {
            shape
                .check_parameters()
                .map_err(|reason| PiecewiseError::NonConvexPiece {
                    piece: i + 1,
                    reason,
                })?;
        }

        // 0-based piece j is a single point when both of its endpoints coincide.
        let single = |j: usize| j >= 1 && j + 1 < m_count && qs[j - 1].value == qs[j].value;

        // Owner (0-based piece) of each endpoint.
        let mut owners = Vec::with_capacity(qs.len());
        for (j, e) in qs.iter().enumerate() {
            let owner = match e.continuity {
                Continuity::Continuous | Continuity::LeftOnly => j,
                Continuity::RightOnly => j + 1,
                Continuity::Isolated => {
                    if single(j) {
                        j
                    } else if single(j + 1) {
                        j + 1
                    } else {
                        return Err(PiecewiseError::Gap { at: e.value });
                    }
                }
            };
            owners.push(owner);
        }
        for j in 1..m_count.saturating_sub(1) {
            if single(j) && (owners[j - 1] != j || owners[j] != j) {
                return Err(PiecewiseError::Overlap {
                    at: qs[j].value,
                    reason: "a single-point piece must own its point".into(),
                });
            }
        }

        let mut pieces = Vec::with_capacity(m_count);
        for (j, shape) in spec.pieces.iter().enumerate() {
            let lower = if j == 0 {
                Bound::open(f64::NEG_INFINITY)
            } else {
                Bound {
                    value: qs[j - 1].value,
                    closed: owners[j - 1] == j,
                }
            };
            let upper = if j + 1 == m_count {
                Bound::open(f64::INFINITY)
            } else {
                Bound {
                    value: qs[j].value,
                    closed: owners[j] == j,
                }
            };
            let (lower_slope, upper_slope) = if lower.value == upper.value {
                (f64::NAN, f64::NAN)
            } else {
                (
                    if lower.value.is_finite() {
                        shape.slope_right(lower.value)
                    } else {
                        f64::NAN
                    },
                    if upper.value.is_finite() {
                        shape.slope_left(upper.value)
                    } else {
                        f64::NAN
                    },
                )
            };
            pieces.push(Piece {
                index: j + 1,
                shape: shape.clone(),
                lower,
                upper,
                lower_slope,
                upper_slope,
            });
        }

        for p in &pieces {
            if !p.is_single_point() {
                probe_convexity(p)?;
            }
        }

        let mut endpoints = Vec::with_capacity(qs.len());
        for (j, e) in qs.iter().enumerate() {
            let q = e.value;
            let left_piece = if single(j) { j - 1 } else { j };
            let right_piece = if single(j + 1) { j + 2 } else { j + 1 };
            let left = pieces[left_piece].shape.value(q);
            let right = pieces[right_piece].shape.value(q);
            let fq = pieces[owners[j]].shape.value(q);
            let tol = value_tol(&[left, right, fq]);
            if fq > left.min(right) + tol {
                return Err(PiecewiseError::NotLowerSemicontinuous { at: q });
            }
            let left_cont = (fq - left).abs() <= tol;
            let right_cont = (fq - right).abs() <= tol;
            let consistent = match e.continuity {
                Continuity::Continuous => left_cont && right_cont,
                Continuity::LeftOnly => left_cont && !right_cont,
                Continuity::RightOnly => right_cont && !left_cont,
                Continuity::Isolated => !left_cont && !right_cont,
            };
            if !consistent {
                if !left_cont && !right_cont {
                    return Err(PiecewiseError::NeitherContinuity {
                        at: q,
                        left,
                        value: fq,
                        right,
                    });
                }
                return Err(PiecewiseError::ContinuityMismatch {
                    at: q,
                    declared: e.continuity,
                    left,
                    right,
                });
            }
            endpoints.push(Endpoint {
                value: q,
                continuity: e.continuity,
                owner: owners[j] + 1,
                left_limit: left,
                right_limit: right,
                f_value: fq,
            });
        }

        let constants = structural_constants(&pieces, &endpoints)?;
        let mut f = PiecewiseFn {
            spec,
            pieces,
            endpoints,
            constants,
            surrogates: Vec::new(),
        };
        f.surrogates = (1..=m_count).map(|m| SurrogateFn::build(&f, m)).collect();
        Ok(f)
    }

    /// A convex function on all of ℝ (`M = 1`).
    pub fn convex(shape: PieceShape) -> Result<Self, PiecewiseError> {
        Self::build(PiecewiseSpec {
            pieces: vec![shape],
            endpoints: Vec::new(),
        })
    }

    pub fn spec(&self) -> &PiecewiseSpec {
        &self.spec
    }

    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Piece `m` (1-based).
    pub fn piece(&self, m: usize) -> &Piece {
        &self.pieces[m - 1]
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    pub fn constants(&self) -> StructuralConstants {
        self.constants
    }

    /// 1-based index of the unique piece containing `x`.
    pub fn piece_index(&self, x: f64) -> usize {
        self.pieces
            .partition_point(|p| p.lies_left_of(x))
            .min(self.pieces.len() - 1)
            + 1
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.piece(self.piece_index(x)).shape.value(x)
    }

    /// The surrogate `f_m` (1-based `m`).
    pub fn surrogate(&self, m: usize) -> &SurrogateFn {
        &self.surrogates[m - 1]
    }

    pub fn surrogates(&self) -> &[SurrogateFn] {
        &self.surrogates
    }

    /// Endpoint of piece `m` that lies at `q`, if any.
    pub fn endpoint_at(&self, m: usize, q: f64) -> Option<&Endpoint> {
        let n = self.endpoints.len();
        [m.checked_sub(2), (m <= n).then(|| m - 1)]
            .into_iter()
            .flatten()
            .map(|j| &self.endpoints[j])
            .find(|e| e.value == q)
    }

    pub fn to_json(&self) -> Result<String, PiecewiseError> {
        if self.spec.pieces.iter().any(PieceShape::is_custom) {
            return Err(PiecewiseError::NotSerializable);
        }
        serde_json::to_string_pretty(&self.spec).map_err(|_| PiecewiseError::NotSerializable)
    }

    pub fn from_json(json: &str) -> crate::Result<Self> {
        let spec: PiecewiseSpec = serde_json::from_str(json)?;
        Ok(Self::build(spec)?)
    }
}

fn probe_convexity(p: &Piece) -> Result<(), PiecewiseError> {
    let (a, b) = clip_interval(p.lower.value, p.upper.value);
    let h = (b - a) / PROBE_POINTS as f64;
    if h <= 0.0 {
        return Ok(());
    }
    let vals: Vec<f64> = (0..=PROBE_POINTS)
        .map(|i| p.shape.value(a + h * i as f64))
        .collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(PiecewiseError::NonConvexPiece {
            piece: p.index,
            reason: format!("non-finite value at {}", a + h * i as f64),
        });
    }
    for (i, w) in vals.windows(3).enumerate() {
        let second = w[0] - 2.0 * w[1] + w[2];
        let scale = 1.0 + w[0].abs() + 2.0 * w[1].abs() + w[2].abs();
        if second < -PROBE_TOL * scale {
            return Err(PiecewiseError::NonConvexPiece {
                piece: p.index,
                reason: format!(
                    "negative second difference {second:e} at {}",
                    a + h * (i + 1) as f64
                ),
            });
        }
    }
    Ok(())
}

fn structural_constants(
    pieces: &[Piece],
    endpoints: &[Endpoint],
) -> Result<StructuralConstants, PiecewiseError> {
    let nondegenerate = || pieces.iter().filter(|p| !p.is_single_point());

    let mut curvature_gap = f64::INFINITY;
    let mut jump = f64::INFINITY;
    for (j, e) in endpoints.iter().enumerate() {
        if e.is_continuous() {
            // A continuous endpoint never touches a single-point piece.
            let gap = pieces[j].upper_slope - pieces[j + 1].lower_slope;
            if gap <= 0.0 || gap.is_nan() {
                return Err(PiecewiseError::NoNegativeCurvature { at: e.value, gap });
            }
            curvature_gap = curvature_gap.min(gap);
        } else {
            let other = if e.owner == j + 1 {
                e.right_limit
            } else {
                e.left_limit
            };
            jump = jump.min((other - e.f_value).abs());
        }
    }

    let slope_bound = nondegenerate()
        .map(|p| p.shape.slope_bound(p.lower.value, p.upper.value))
        .fold(0.0, f64::max);
    let min_length = nondegenerate()
        .map(Piece::length)
        .fold(f64::INFINITY, f64::min);

    let mut margin = f64::INFINITY;
    for e in endpoints {
        let q = e.value;
        for p in nondegenerate() {
            if p.upper.value == q {
                let nearest = p
                    .shape
                    .kinks()
                    .into_iter()
                    .filter(|&k| k < q && k > p.lower.value)
                    .fold(p.lower.value, f64::max);
                margin = margin.min(q - nearest);
            }
            if p.lower.value == q {
                let nearest = p
                    .shape
                    .kinks()
                    .into_iter()
                    .filter(|&k| k > q && k < p.upper.value)
                    .fold(p.upper.value, f64::min);
                margin = margin.min(nearest - q);
            }
        }
    }
    if margin.is_finite() || min_length.is_finite() {
        margin = margin.min(min_length / 2.0);
    }

    Ok(StructuralConstants {
        curvature_gap,
        jump,
        slope_bound,
        min_length,
        margin,
    })
}
