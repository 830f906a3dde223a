use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Finite-difference step for one-sided slopes of user pieces.
pub const SLOPE_FD_STEP: f64 = 1e-6;

/// A convex function used on one piece of a piecewise convex function.
///
/// The built-in shapes are convex on all of ℝ, which lets the proximal
/// map of a shape restricted to an interval be computed by clamping.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PieceShape {
    /// `offset + slope * x`
    Affine { offset: f64, slope: f64 },
    /// `offset + weight * |x - center|`
    Abs {
        offset: f64,
        weight: f64,
        center: f64,
    },
    /// `a * x^2 + b * x + c`
    Quadratic { a: f64, b: f64, c: f64 },
    #[serde(skip)]
    Custom(CustomShape),
}

/// A user-supplied convex evaluator. Slopes are estimated numerically.
#[derive(Clone)]
pub struct CustomShape {
    pub name: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomShape {
    pub fn new(name: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CustomShape {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }
}

impl fmt::Debug for CustomShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomShape({})", self.name)
    }
}

impl fmt::Debug for PieceShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PieceShape::Affine { offset, slope } => write!(f, "Affine({offset} + {slope}x)"),
            PieceShape::Abs {
                offset,
                weight,
                center,
            } => write!(f, "Abs({offset} + {weight}|x - {center}|)"),
            PieceShape::Quadratic { a, b, c } => write!(f, "Quadratic({a}x² + {b}x + {c})"),
            PieceShape::Custom(c) => c.fmt(f),
        }
    }
}

impl PieceShape {
    pub fn constant(value: f64) -> Self {
        PieceShape::Affine {
            offset: value,
            slope: 0.0,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PieceShape::Custom(CustomShape::new(name, eval))
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            PieceShape::Affine { offset, slope } => offset + slope * x,
            PieceShape::Abs {
                offset,
                weight,
                center,
            } => offset + weight * (x - center).abs(),
            PieceShape::Quadratic { a, b, c } => (a * x + b) * x + c,
            PieceShape::Custom(c) => (c.eval)(x),
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, PieceShape::Custom(_))
    }

    /// Parameter-level convexity and finiteness check for built-in shapes.
    pub(crate) fn check_parameters(&self) -> Result<(), String> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match *self {
            PieceShape::Affine { offset, slope } if !finite(&[offset, slope]) => {
                Err("affine parameters must be finite".into())
            }
            PieceShape::Abs {
                offset,
                weight,
                center,
            } => {
                if !finite(&[offset, weight, center]) {
                    Err("abs parameters must be finite".into())
                } else if weight < 0.0 {
                    Err(format!("abs weight {weight} is negative"))
                } else {
                    Ok(())
                }
            }
            PieceShape::Quadratic { a, b, c } => {
                if !finite(&[a, b, c]) {
                    Err("quadratic parameters must be finite".into())
                } else if a < 0.0 {
                    Err(format!("quadratic coefficient {a} is negative"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Derivative approached from the right, `lim_{y -> x+} f'(y)`.
    pub fn slope_right(&self, x: f64) -> f64 {
        match *self {
            PieceShape::Affine { slope, .. } => slope,
            PieceShape::Abs { weight, center, .. } => {
                if x >= center {
                    weight
                } else {
                    -weight
                }
            }
            PieceShape::Quadratic { a, b, .. } => 2.0 * a * x + b,
            PieceShape::Custom(_) => richardson(|h| (self.value(x + h) - self.value(x)) / h),
        }
    }

    /// Derivative approached from the left, `lim_{y -> x-} f'(y)`.
    pub fn slope_left(&self, x: f64) -> f64 {
        match *self {
            PieceShape::Affine { slope, .. } => slope,
            PieceShape::Abs { weight, center, .. } => {
                if x <= center {
                    -weight
                } else {
                    weight
                }
            }
            PieceShape::Quadratic { a, b, .. } => 2.0 * a * x + b,
            PieceShape::Custom(_) => richardson(|h| (self.value(x) - self.value(x - h)) / h),
        }
    }

    /// Points where the shape is not differentiable.
    pub(crate) fn kinks(&self) -> Vec<f64> {
        match *self {
            PieceShape::Abs { weight, center, .. } if weight > 0.0 => vec![center],
            _ => Vec::new(),
        }
    }

    /// `sup |f'|` over the open interval `(lo, hi)`; `+inf` when unbounded.
    pub(crate) fn slope_bound(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            PieceShape::Affine { slope, .. } => slope.abs(),
            PieceShape::Abs { weight, .. } => weight,
            PieceShape::Quadratic { a, b, .. } => {
                if a == 0.0 {
                    b.abs()
                } else {
                    (2.0 * a * lo + b).abs().max((2.0 * a * hi + b).abs())
                }
            }
            PieceShape::Custom(_) => {
                let (a, b) = clip_interval(lo, hi);
                let n = 1000;
                let step = (b - a) / n as f64;
                (0..n)
                    .map(|i| {
                        let x0 = a + step * i as f64;
                        ((self.value(x0 + step) - self.value(x0)) / step).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Minimizer over ℝ of `(v - x)^2 / (2s) + f(v)` when a closed form exists.
    pub fn prox_on_line(&self, s: f64, x: f64) -> Option<f64> {
        match *self {
            PieceShape::Affine { slope, .. } => Some(x - s * slope),
            PieceShape::Abs { weight, center, .. } => {
                Some(center + soft_threshold(x - center, weight * s))
            }
            PieceShape::Quadratic { a, b, .. } => Some((x - s * b) / (1.0 + 2.0 * s * a)),
            PieceShape::Custom(_) => None,
        }
    }
}

/// `sign(x) * max(|x| - t, 0)`
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Grid range used to probe pieces with infinite ends.
pub(crate) const PROBE_LIMIT: f64 = 1e6;

pub(crate) fn clip_interval(lo: f64, hi: f64) -> (f64, f64) {
    let a = lo.max(-PROBE_LIMIT);
    let b = hi.min(PROBE_LIMIT);
    if a <= b {
        (a, b)
    } else if lo.is_infinite() {
        (hi - PROBE_LIMIT, hi)
    } else {
        (lo, lo + PROBE_LIMIT)
    }
}

fn richardson(diff: impl Fn(f64) -> f64) -> f64 {
    let h = SLOPE_FD_STEP;
    2.0 * diff(h / 2.0) - diff(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_one_sided_slopes_at_center() {
        let s = PieceShape::Abs {
            offset: 0.0,
            weight: 0.3,
            center: 1.0,
        };
        assert_eq!(s.slope_left(1.0), -0.3);
        assert_eq!(s.slope_right(1.0), 0.3);
        assert_eq!(s.kinks(), vec![1.0]);
    }

    #[test]
    fn custom_slopes_match_analytic_within_tolerance() {
        let c = PieceShape::custom("cosh", f64::cosh);
        for &x in &[-1.3, 0.0, 0.4, 2.0] {
            assert!((c.slope_right(x) - x.sinh()).abs() < 1e-6);
            assert!((c.slope_left(x) - x.sinh()).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_prox_closed_form() {
        let q = PieceShape::Quadratic {
            a: 1.0,
            b: 0.0,
            c: 0.0,
        };
        assert_eq!(q.prox_on_line(1.0, 3.0), Some(1.0));
    }

    #[test]
    fn custom_pieces_do_not_serialize() {
        let c = PieceShape::custom("x4", |x| x.powi(4));
        assert!(serde_json::to_string(&c).is_err());
        let a = PieceShape::Affine {
            offset: 1.0,
            slope: 2.0,
        };
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"shape":"affine","offset":1.0,"slope":2.0}"#);
    }
}
