//! Smooth convex losses `g` with gradients and Lipschitz bounds.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const POWER_ITERS: usize = 100;
const POWER_TOL: f64 = 1e-8;
/// Margins above this use the linear branch of `log(1 + exp(t))`.
const SOFTPLUS_LINEAR: f64 = 30.0;

/// Feature matrix (`n x d`) with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::Dataset(format!(
                "need n >= 1 and d >= 1, got {n} x {d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::Dataset(format!(
                "{n} rows but {} labels",
                labels.len()
            )));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite entry".into()));
        }
        Ok(Dataset { features, labels })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|&y| y == 1.0 || y == -1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `||y - D x||^2`
    LeastSquares,
    /// `(1/n) sum_i log(1 + exp(-y_i a_i^T x))`
    Logistic,
}

/// A smooth loss over a shared dataset.
#[derive(Clone, Debug)]
pub struct SmoothLoss {
    kind: LossKind,
    data: Arc<Dataset>,
    lipschitz: f64,
}

fn softplus(t: f64) -> f64 {
    if t > SOFTPLUS_LINEAR {
        t
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl SmoothLoss {
    pub fn new(kind: LossKind, data: impl Into<Arc<Dataset>>) -> Result<Self> {
        let data = data.into();
        if kind == LossKind::Logistic && !data.is_binary() {
            return Err(Error::Dataset(
                "logistic loss needs labels in {-1, +1}".into(),
            ));
        }
        let sigma2 = top_eigenvalue(&data.features);
        let lipschitz = match kind {
            LossKind::LeastSquares => 2.0 * sigma2,
            LossKind::Logistic => sigma2 / (4.0 * data.n() as f64),
        };
        Ok(SmoothLoss {
            kind,
            data,
            lipschitz,
        })
    }

    /// `g(x) = scale/2 * (x - center)^2` in one dimension, as a least-squares loss.
    pub fn quadratic_1d(scale: f64, center: f64) -> Result<Self> {
        let a = (scale / 2.0).sqrt();
        let data = Dataset::new(
            Array2::from_elem((1, 1), a),
            Array1::from_elem(1, a * center),
        )?;
        Self::new(LossKind::LeastSquares, data)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.d()
    }

    /// `L_g`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }

    fn check(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &Array1<f64>) -> Result<f64> {
        self.check(x.view())?;
        let dx = self.data.features.dot(x);
        let y = &self.data.labels;
        Ok(match self.kind {
            LossKind::LeastSquares => dx.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum(),
            LossKind::Logistic => {
                let total: f64 = dx.iter().zip(y).map(|(m, yi)| softplus(-yi * m)).sum();
                total / self.data.n() as f64
            }
        })
    }

    pub fn gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check(x.view())?;
        let dx = self.data.features.dot(x);
        let y = &self.data.labels;
        let weights: Array1<f64> = match self.kind {
            LossKind::LeastSquares => dx.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect(),
            LossKind::Logistic => {
                let n = self.data.n() as f64;
                dx.iter()
                    .zip(y)
                    .map(|(m, yi)| -yi * sigmoid(-yi * m) / n)
                    .collect()
            }
        };
        let mut grad = Array1::zeros(self.data.d());
        for (row, w) in self.data.features.rows().into_iter().zip(&weights) {
            if *w != 0.0 {
                grad.scaled_add(*w, &row);
            }
        }
        Ok(grad)
    }

    pub fn value_and_gradient(&self, x: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }
}

/// Largest eigenvalue of `D^T D`, i.e. `sigma_max(D)^2`, by power iteration.
pub fn top_eigenvalue(d: &Array2<f64>) -> f64 {
    let cols = d.ncols();
    let mut v: Array1<f64> = (0..cols)
        .map(|i| 1.0 + (i as f64 + 1.0).sqrt().fract())
        .collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let w = d.t().dot(&d.dot(&v));
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next - lambda).abs() <= POWER_TOL * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda
}
