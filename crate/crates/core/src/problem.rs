//! The composite objective `F(x) = g(x) + sum_i f_i(x_i)`.

use std::sync::Arc;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::piecewise::{PiecewiseFn, StructuralConstants, SurrogateFn};
use crate::smooth::SmoothLoss;

/// Separable regularizer with one piecewise function per coordinate.
#[derive(Clone, Debug)]
pub struct Regularizer {
    fns: Vec<Arc<PiecewiseFn>>,
}

impl Regularizer {
    /// The same `f` on every one of `d` coordinates.
    pub fn uniform(f: impl Into<Arc<PiecewiseFn>>, d: usize) -> Self {
        let f = f.into();
        Regularizer { fns: vec![f; d] }
    }

    pub fn per_coordinate(fns: Vec<Arc<PiecewiseFn>>) -> Self {
        Regularizer { fns }
    }

    pub fn dim(&self) -> usize {
        self.fns.len()
    }

    pub fn function(&self, i: usize) -> &PiecewiseFn {
        &self.fns[i]
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        self.fns.iter().zip(x).map(|(f, &xi)| f.evaluate(xi)).sum()
    }

    /// `P(x)`, 1-based piece indices.
    pub fn pieces(&self, x: &Array1<f64>) -> Vec<u32> {
        self.fns
            .iter()
            .zip(x)
            .map(|(f, &xi)| f.piece_index(xi) as u32)
            .collect()
    }

    pub fn surrogates<'a>(&'a self, pieces: &[u32]) -> Vec<&'a SurrogateFn> {
        self.fns
            .iter()
            .zip(pieces)
            .map(|(f, &m)| f.surrogate(m as usize))
            .collect()
    }

    /// `sum_i f_{m_i}(v_i)`.
    pub fn surrogate_value(&self, pieces: &[u32], v: &Array1<f64>) -> f64 {
        self.fns
            .iter()
            .zip(pieces)
            .zip(v)
            .map(|((f, &m), &vi)| f.surrogate(m as usize).value(vi))
            .sum()
    }

    /// Constants combined over coordinates: smallest C, J, R0, s0 and largest F0.
    pub fn constants(&self) -> StructuralConstants {
        self.fns.iter().map(|f| f.constants()).fold(
            StructuralConstants {
                curvature_gap: f64::INFINITY,
                jump: f64::INFINITY,
                slope_bound: 0.0,
                min_length: f64::INFINITY,
                margin: f64::INFINITY,
            },
            |a, c| StructuralConstants {
                curvature_gap: a.curvature_gap.min(c.curvature_gap),
                jump: a.jump.min(c.jump),
                slope_bound: a.slope_bound.max(c.slope_bound),
                min_length: a.min_length.min(c.min_length),
                margin: a.margin.min(c.margin),
            },
        )
    }

    /// True when every coordinate uses a single convex piece.
    pub fn is_convex(&self) -> bool {
        self.fns.iter().all(|f| f.num_pieces() == 1)
    }

    pub fn has_endpoints(&self) -> bool {
        self.fns.iter().any(|f| !f.endpoints().is_empty())
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    loss: SmoothLoss,
    reg: Regularizer,
}

impl Problem {
    pub fn new(loss: SmoothLoss, reg: Regularizer) -> Result<Self> {
        if loss.dim() != reg.dim() {
            return Err(Error::DimensionMismatch {
                expected: loss.dim(),
                got: reg.dim(),
            });
        }
        Ok(Problem { loss, reg })
    }

    /// `g` plus the same `f` on every coordinate.
    pub fn uniform(loss: SmoothLoss, f: impl Into<Arc<PiecewiseFn>>) -> Self {
        let d = loss.dim();
        Problem {
            loss,
            reg: Regularizer::uniform(f, d),
        }
    }

    pub fn loss(&self) -> &SmoothLoss {
        &self.loss
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    pub fn dim(&self) -> usize {
        self.loss.dim()
    }

    pub fn check(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `F(x)`.
    pub fn objective(&self, x: &Array1<f64>) -> Result<f64> {
        Ok(self.loss.value(x)? + self.reg.value(x))
    }

    /// `F_{P}(v) = g(v) + sum_i f_{P_i}(v_i)`.
    pub fn surrogate_objective(&self, pieces: &[u32], v: &Array1<f64>) -> Result<f64> {
        if pieces.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: pieces.len(),
            });
        }
        Ok(self.loss.value(v)? + self.reg.surrogate_value(pieces, v))
    }
}
