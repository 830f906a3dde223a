use serde::Serialize;

use super::{Bound, PieceShape, PiecewiseFn};
use crate::prox::ProxKernel;

/// Which case of the extension rule produced one side of a surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The piece is unbounded on this side.
    Unbounded,
    /// `f` is continuous at the endpoint: `f(q) + v (x - q)`.
    ContinuousLinear,
    /// The endpoint belongs to the neighbour and `f(q)` is below the limit
    /// from this piece: `lim f + v (x - q)`.
    LimitLinear,
    /// The piece owns the endpoint and `f` jumps up across it: the
    /// extension is the constant limit from the far side. Nonconvex.
    ConstantLimit,
}

/// The surrogate outside the piece on one side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extension {
    pub branch: Branch,
    pub anchor: f64,
    pub value: f64,
    pub slope: f64,
}

impl Extension {
    fn unbounded() -> Self {
        Extension {
            branch: Branch::Unbounded,
            anchor: f64::NAN,
            value: f64::NAN,
            slope: f64::NAN,
        }
    }

    fn linear(branch: Branch, anchor: f64, value: f64, slope: f64) -> Self {
        Extension {
            branch,
            anchor,
            value,
            slope,
        }
    }

    fn constant(anchor: f64, value: f64) -> Self {
        Extension {
            branch: Branch::ConstantLimit,
            anchor,
            value,
            slope: 0.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.slope == 0.0 {
            self.value
        } else {
            self.value + self.slope * (x - self.anchor)
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.branch, Branch::ContinuousLinear | Branch::LimitLinear)
    }
}

/// The surrogate `f_m`: `f` on piece `R_m`, extended outside it.
#[derive(Clone, Debug)]
pub struct SurrogateFn {
    /// 1-based index of the source piece.
    pub piece: usize,
    pub shape: PieceShape,
    pub lower: Bound,
    pub upper: Bound,
    pub left: Extension,
    pub right: Extension,
    pub kernel: ProxKernel,
}

impl SurrogateFn {
    pub(super) fn build(f: &PiecewiseFn, m: usize) -> Self {
        let p = f.piece(m);
        let (left, right) = if p.is_single_point() {
            let e = f
                .endpoint_at(m, p.lower.value)
                .expect("single-point piece has an endpoint");
            (
                Extension::constant(e.value, e.left_limit),
                Extension::constant(e.value, e.right_limit),
            )
        } else {
            let left = match f.endpoint_at(m, p.lower.value) {
                None => Extension::unbounded(),
                Some(e) => {
                    let q = e.value;
                    if e.is_continuous() {
                        Extension::linear(
                            Branch::ContinuousLinear,
                            q,
                            p.shape.value(q),
                            p.lower_slope,
                        )
                    } else if e.owner == m {
                        Extension::constant(q, e.left_limit)
                    } else {
                        Extension::linear(Branch::LimitLinear, q, p.shape.value(q), p.lower_slope)
                    }
                }
            };
            let right = match f.endpoint_at(m, p.upper.value) {
                None => Extension::unbounded(),
                Some(e) => {
                    let q = e.value;
                    if e.is_continuous() {
                        Extension::linear(
                            Branch::ContinuousLinear,
                            q,
                            p.shape.value(q),
                            p.upper_slope,
                        )
                    } else if e.owner == m {
                        Extension::constant(q, e.right_limit)
                    } else {
                        Extension::linear(Branch::LimitLinear, q, p.shape.value(q), p.upper_slope)
                    }
                }
            };
            (left, right)
        };
        let mut sur = SurrogateFn {
            piece: m,
            shape: p.shape.clone(),
            lower: p.lower,
            upper: p.upper,
            left,
            right,
            kernel: ProxKernel::Numeric,
        };
        sur.kernel = ProxKernel::detect(&sur);
        sur
    }

    pub fn value(&self, x: f64) -> f64 {
        if x < self.lower.value {
            self.left.eval(x)
        } else if x > self.upper.value {
            self.right.eval(x)
        } else {
            self.shape.value(x)
        }
    }

    /// False when either side takes the constant-limit branch.
    pub fn is_convex(&self) -> bool {
        self.left.branch != Branch::ConstantLimit && self.right.branch != Branch::ConstantLimit
    }

    pub fn branches(&self) -> (Branch, Branch) {
        (self.left.branch, self.right.branch)
    }
}
