//! Proximal maps of surrogates and of the true piecewise function, plus a
//! brute-force grid oracle used to check them.
//!
//! All maps minimize `(v - x)^2 / (2s) + f(v)`. When several minimizers
//! exist, objectives within `TIE_TOL * (1 + |obj|)` are treated as equal and
//! the candidate with the smaller `|v|`, then the smaller `v`, wins.

use ndarray::Array1;
use serde::Serialize;

use crate::error::ProxError;
use crate::piecewise::{Branch, PieceShape, PiecewiseFn, SurrogateFn};

pub const TIE_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 60;
const GOLDEN_TOL: f64 = 1e-12;

/// Which side of the jump carries the higher constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSide {
    Left,
    Right,
}

/// Closed-form proximal map detected from a surrogate's structure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxKernel {
    /// Constant surrogate: `prox(x) = x`.
    Identity,
    /// Affine surrogate: `prox(x) = x - s * slope`.
    LinearShift { slope: f64 },
    /// `weight * |v - center|` plus a constant.
    SoftThreshold { center: f64, weight: f64 },
    /// `a v^2 + b v` plus a constant.
    Quadratic { a: f64, b: f64 },
    /// Constant with an upward jump of `jump` on `side` of `tau`; the piece owns `tau`.
    IndicatorSnap { tau: f64, jump: f64, side: JumpSide },
    /// Constant except at `point`, where it is lower by `jump`.
    HardThreshold { point: f64, jump: f64 },
    /// Minimum over the left extension, the piece and the right extension.
    Numeric,
}

impl ProxKernel {
    pub fn name(&self) -> &'static str {
        match self {
            ProxKernel::Identity => "identity",
            ProxKernel::LinearShift { .. } => "linear_shift",
            ProxKernel::SoftThreshold { .. } => "soft_threshold",
            ProxKernel::Quadratic { .. } => "quadratic",
            ProxKernel::IndicatorSnap { .. } => "indicator_snap",
            ProxKernel::HardThreshold { .. } => "hard_threshold",
            ProxKernel::Numeric => "numeric",
        }
    }

    pub(crate) fn detect(sur: &SurrogateFn) -> ProxKernel {
        let (l, r) = (&sur.left, &sur.right);
        let open_or_linear =
            |e: &crate::piecewise::Extension| e.branch == Branch::Unbounded || e.is_linear();
        if sur.lower.value == sur.upper.value {
            let c = sur.shape.value(sur.lower.value);
            if l.value == r.value && l.value > c {
                return ProxKernel::HardThreshold {
                    point: sur.lower.value,
                    jump: l.value - c,
                };
            }
            return ProxKernel::Numeric;
        }
        if open_or_linear(l) && open_or_linear(r) {
            match sur.shape {
                PieceShape::Affine { slope, .. } => {
                    return if slope == 0.0 {
                        ProxKernel::Identity
                    } else {
                        ProxKernel::LinearShift { slope }
                    };
                }
                PieceShape::Abs { weight, center, .. } => {
                    return if weight == 0.0 {
                        ProxKernel::Identity
                    } else if center <= sur.lower.value {
                        ProxKernel::LinearShift { slope: weight }
                    } else if center >= sur.upper.value {
                        ProxKernel::LinearShift { slope: -weight }
                    } else {
                        ProxKernel::SoftThreshold { center, weight }
                    };
                }
                PieceShape::Quadratic { a, b, .. }
                    if l.branch == Branch::Unbounded && r.branch == Branch::Unbounded =>
                {
                    return ProxKernel::Quadratic { a, b };
                }
                _ => {}
            }
        }
        if let PieceShape::Affine { slope, .. } = sur.shape {
            let flat = |e: &crate::piecewise::Extension| {
                e.branch == Branch::Unbounded || (e.is_linear() && e.slope == 0.0)
            };
            if slope == 0.0 {
                let c = sur.shape.value(0.0);
                if l.branch == Branch::ConstantLimit && flat(r) && l.value > c {
                    return ProxKernel::IndicatorSnap {
                        tau: sur.lower.value,
                        jump: l.value - c,
                        side: JumpSide::Left,
                    };
                }
                if r.branch == Branch::ConstantLimit && flat(l) && r.value > c {
                    return ProxKernel::IndicatorSnap {
                        tau: sur.upper.value,
                        jump: r.value - c,
                        side: JumpSide::Right,
                    };
                }
            }
        }
        ProxKernel::Numeric
    }
}

fn check_step(s: f64) -> Result<(), ProxError> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(ProxError::InvalidStep(s))
    }
}

/// Whether candidate `a` (objective `fa`) beats the incumbent `b`.
fn better(a: f64, fa: f64, b: f64, fb: f64, rel_tol: f64) -> bool {
    let tol = rel_tol * (1.0 + fa.abs().max(fb.abs()));
    if fa < fb - tol {
        true
    } else if fa > fb + tol {
        false
    } else {
        a.abs() < b.abs() || (a.abs() == b.abs() && a < b)
    }
}

/// Best of `(v, objective)` candidates under the tie-break rule.
pub(crate) fn pick(cands: impl IntoIterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    pick_with(cands, TIE_TOL)
}

fn pick_with(cands: impl IntoIterator<Item = (f64, f64)>, rel_tol: f64) -> Option<(f64, f64)> {
    cands.into_iter().fold(None, |best, (v, fv)| match best {
        Some((b, fb)) if !better(v, fv, b, fb, rel_tol) => Some((b, fb)),
        _ => Some((v, fv)),
    })
}

/// Two-candidate prox for jump kernels: stay at `x` paying `jump`, or move to `q`.
fn snap(x: f64, q: f64, jump: f64, s: f64) -> f64 {
    let d = x - q;
    pick([(x, jump), (q, d * d / (2.0 * s))]).unwrap().0
}

/// `prox_{s f_m}(x)`.
pub fn prox_surrogate(sur: &SurrogateFn, s: f64, x: f64) -> Result<f64, ProxError> {
    check_step(s)?;
    if !x.is_finite() {
        return Err(ProxError::NonFinite { at: x });
    }
    let v = match sur.kernel {
        ProxKernel::Identity => x,
        ProxKernel::LinearShift { slope } => x - s * slope,
        ProxKernel::SoftThreshold { center, weight } => {
            center + crate::piecewise::soft_threshold(x - center, weight * s)
        }
        ProxKernel::Quadratic { a, b } => (x - s * b) / (1.0 + 2.0 * s * a),
        ProxKernel::IndicatorSnap { tau, jump, side } => match side {
            JumpSide::Left if x < tau => snap(x, tau, jump, s),
            JumpSide::Right if x > tau => snap(x, tau, jump, s),
            _ => x,
        },
        ProxKernel::HardThreshold { point, jump } => snap(x, point, jump, s),
        ProxKernel::Numeric => prox_surrogate_numeric(sur, s, x)?,
    };
    Ok(v)
}

/// Region-wise minimization of the surrogate objective, ignoring any kernel.
pub fn prox_surrogate_numeric(sur: &SurrogateFn, s: f64, x: f64) -> Result<f64, ProxError> {
    check_step(s)?;
    let obj = |v: f64| (v - x) * (v - x) / (2.0 * s) + sur.value(v);
    let (lo, hi) = (sur.lower.value, sur.upper.value);
    let mut cands = Vec::with_capacity(3);
    if lo.is_finite() {
        cands.push((x - s * sur.left.slope).min(lo));
    }
    if hi.is_finite() {
        cands.push((x - s * sur.right.slope).max(hi));
    }
    cands.push(piece_candidate(&sur.shape, lo, hi, s, x)?);
    best_of(cands, obj)
}

fn best_of(cands: Vec<f64>, obj: impl Fn(f64) -> f64) -> Result<f64, ProxError> {
    let scored: Vec<(f64, f64)> = cands.into_iter().map(|v| (v, obj(v))).collect();
    if let Some(&(v, _)) = scored.iter().find(|(_, fv)| !fv.is_finite()) {
        return Err(ProxError::NonFinite { at: v });
    }
    Ok(pick(scored).expect("at least one candidate").0)
}

/// Minimizer of `(v - x)^2 / (2s) + shape(v)` over `[lo, hi]`.
fn piece_candidate(shape: &PieceShape, lo: f64, hi: f64, s: f64, x: f64) -> Result<f64, ProxError> {
    if lo == hi {
        return Ok(lo);
    }
    if let Some(v) = shape.prox_on_line(s, x) {
        return Ok(v.clamp(lo, hi));
    }
    let phi = |v: f64| (v - x) * (v - x) / (2.0 * s) + shape.value(v);
    let c = x.clamp(lo, hi);
    let fc = phi(c);
    if !fc.is_finite() {
        return Err(ProxError::NonFinite { at: c });
    }
    let expand = |dir: f64, limit: f64| -> Result<f64, ProxError> {
        if limit.is_finite() {
            return Ok(limit);
        }
        let mut step = 1.0;
        for _ in 0..MAX_DOUBLINGS {
            let p = c + dir * step;
            if phi(p) >= fc {
                return Ok(p);
            }
            step *= 2.0;
        }
        Err(ProxError::Bracket { x })
    };
    let a = expand(-1.0, lo)?;
    let b = expand(1.0, hi)?;
    Ok(golden_section(phi, a, b, GOLDEN_TOL))
}

/// Golden-section search for a convex `phi` on `[a, b]`; endpoints are candidates too.
pub(crate) fn golden_section(phi: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (a0, b0) = (a, b);
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..200 {
        if b - a <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = phi(d);
        }
    }
    let mid = 0.5 * (a + b);
    pick_with([a0, b0, mid].map(|v| (v, phi(v))), 0.0)
        .unwrap()
        .0
}

/// `prox_{s f}(x)` for the true piecewise `f`: best per-piece candidate.
pub fn prox_true(f: &PiecewiseFn, s: f64, x: f64) -> Result<f64, ProxError> {
    check_step(s)?;
    if !x.is_finite() {
        return Err(ProxError::NonFinite { at: x });
    }
    let mut cands = Vec::with_capacity(f.num_pieces());
    for p in f.pieces() {
        cands.push(piece_candidate(
            &p.shape,
            p.lower.value,
            p.upper.value,
            s,
            x,
        )?);
    }
    best_of(cands, |v| (v - x) * (v - x) / (2.0 * s) + f.evaluate(v))
}

/// Coordinatewise surrogate prox. Errors carry the failing coordinate.
pub fn prox_vector(
    surrogates: &[&SurrogateFn],
    s: f64,
    u: &Array1<f64>,
) -> crate::Result<Array1<f64>> {
    if surrogates.len() != u.len() {
        return Err(crate::Error::DimensionMismatch {
            expected: surrogates.len(),
            got: u.len(),
        });
    }
    let mut out = Array1::zeros(u.len());
    for (i, (&sur, &ui)) in surrogates.iter().zip(u.iter()).enumerate() {
        out[i] = prox_surrogate(sur, s, ui).map_err(|e| ProxError::Coordinate {
            coordinate: i,
            source: Box::new(e),
        })?;
    }
    Ok(out)
}

/// Grid argmin of `(v - x)^2 / (2s) + f(v)` on `[x - halfwidth, x + halfwidth]`,
/// refined by golden-section search on the two grid cells around it.
pub fn prox_oracle(
    f: impl Fn(f64) -> f64,
    s: f64,
    x: f64,
    halfwidth: f64,
    resolution: f64,
) -> Result<f64, ProxError> {
    check_step(s)?;
    if !(resolution > 0.0) || !(halfwidth >= 0.0) || !x.is_finite() {
        return Err(ProxError::NonFinite { at: x });
    }
    let inv = 0.5 / s;
    let obj = |v: f64| (v - x) * (v - x) * inv + f(v);
    let n = (2.0 * halfwidth / resolution).ceil().max(1.0) as usize;
    let h = 2.0 * halfwidth / n as f64;
    let start = x - halfwidth;
    let mut best = (x, obj(x));
    if !best.1.is_finite() {
        return Err(ProxError::NonFinite { at: x });
    }
    for i in 0..=n {
        let v = start + h * i as f64;
        let fv = obj(v);
        if !fv.is_finite() {
            return Err(ProxError::NonFinite { at: v });
        }
        if fv < best.1 {
            best = (v, fv);
        }
    }
    let g = best.0;
    if h == 0.0 {
        return Ok(g);
    }
    let left = golden_section(obj, g - h, g, 1e-10);
    let right = golden_section(obj, g, g + h, 1e-10);
    Ok(pick_with([g, left, right].map(|v| (v, obj(v))), 0.0)
        .unwrap()
        .0)
}
