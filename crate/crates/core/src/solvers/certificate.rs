use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Problem;

const GRAD_SAMPLES: usize = 1000;
const GRAD_SAFETY: f64 = 1.5;

/// Constants entering the step-size bounds. `C` and `J` may be `+inf` when
/// the penalty has no continuous, respectively discontinuous, endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    /// `L_g`.
    pub lipschitz: f64,
    /// `G`, a bound on `||grad g||` over the inflated level set.
    pub grad_bound: f64,
    /// `F0`.
    pub slope_bound: f64,
    /// `C`.
    pub curvature_gap: f64,
    /// `J`.
    pub jump: f64,
    /// `eps0`; required when continuous endpoints exist.
    pub eps0: Option<f64>,
    /// `s0`.
    pub margin: f64,
    /// `R0`.
    pub min_length: f64,
    pub w0: f64,
    pub dim: usize,
}

impl CertificateInputs {
    /// Structural constants of `problem`, with `G` and `eps0` supplied by the caller.
    pub fn from_problem(problem: &Problem, grad_bound: f64, eps0: Option<f64>, w0: f64) -> Self {
        let c = problem.regularizer().constants();
        CertificateInputs {
            lipschitz: problem.loss().lipschitz_bound(),
            grad_bound,
            slope_bound: c.slope_bound,
            curvature_gap: c.curvature_gap,
            jump: c.jump,
            eps0,
            margin: c.margin,
            min_length: c.min_length,
            w0,
            dim: problem.dim(),
        }
    }

    fn has_continuous(&self) -> bool {
        self.curvature_gap.is_finite()
    }

    fn has_jumps(&self) -> bool {
        self.jump.is_finite()
    }

    fn has_endpoints(&self) -> bool {
        self.has_continuous() || self.has_jumps()
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::Certificate(format!(
                "{what} must be positive, got {v}"
            )))
        };
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return bad("L_g", self.lipschitz);
        }
        if !(self.grad_bound >= 0.0 && self.grad_bound.is_finite()) {
            return Err(Error::Certificate(format!(
                "G must be finite and non-negative, got {}",
                self.grad_bound
            )));
        }
        if !(self.slope_bound >= 0.0) {
            return Err(Error::Certificate(format!(
                "F0 must be non-negative, got {}",
                self.slope_bound
            )));
        }
        if !(self.curvature_gap > 0.0) {
            return bad("C", self.curvature_gap);
        }
        if !(self.jump > 0.0) {
            return bad("J", self.jump);
        }
        if !(self.margin > 0.0) {
            return bad("s0", self.margin);
        }
        if !(self.min_length > 0.0) {
            return bad("R0", self.min_length);
        }
        if !(self.w0 > 0.0 && self.w0 <= 1.0) {
            return Err(Error::Certificate(format!(
                "w0 must lie in (0, 1], got {}",
                self.w0
            )));
        }
        if self.dim == 0 {
            return Err(Error::Certificate("dimension must be at least 1".into()));
        }
        if self.has_endpoints() && !self.slope_bound.is_finite() {
            return Err(Error::Certificate(
                "F0 is unbounded but the penalty has endpoints".into(),
            ));
        }
        if self.has_continuous() {
            match self.eps0 {
                None => {
                    return Err(Error::Certificate(
                        "eps0 is required when the penalty has continuous endpoints".into(),
                    ))
                }
                Some(e) if !(e > 0.0) => return bad("eps0", e),
                _ => {}
            }
        }
        Ok(())
    }
}

/// One candidate upper bound on `s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepTerm {
    pub label: &'static str,
    pub value: f64,
}

/// `kappa` and its parts at a given step size; `+inf` marks a dropped term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Kappas {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa0: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepSizeCertificate {
    pub inputs: CertificateInputs,
    /// `G + sqrt(d) F0`.
    pub b: f64,
    /// `A = L_g (G + sqrt(d) F0)`.
    pub a: f64,
    /// Terms of `s1`, then the caps.
    pub terms: Vec<StepTerm>,
    pub s1: f64,
    pub s_max: f64,
    pub binding: &'static str,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Evaluates the step-size bounds and reports which one binds.
pub fn certify_step_size(inputs: CertificateInputs) -> Result<StepSizeCertificate> {
    inputs.validate()?;
    let CertificateInputs {
        lipschitz: l,
        grad_bound: g,
        slope_bound: f0,
        curvature_gap: c,
        jump: j,
        w0,
        margin: s0,
        ..
    } = inputs;
    let eps0 = inputs.eps0.unwrap_or(f64::INFINITY);
    let sqrt_d = (inputs.dim as f64).sqrt();

    let mut s1_terms = Vec::new();
    let mut caps = Vec::new();
    let (b, a);
    if inputs.has_endpoints() {
        b = g + sqrt_d * f0;
        a = l * b;
        let gf = g + f0;
        s1_terms.push(StepTerm {
            label: "s0/(G+F0)",
            value: ratio(s0, gf),
        });
        if inputs.has_continuous() {
            s1_terms.push(StepTerm {
                label: "eps0/(L_g(1-w0)(G+F0))",
                value: ratio(eps0, l * (1.0 - w0) * gf),
            });
        }
        if inputs.has_jumps() {
            s1_terms.push(StepTerm {
                label: "J/(F0 G+G^2/2)",
                value: ratio(j, f0 * g + g * g / 2.0),
            });
            s1_terms.push(StepTerm {
                label: "J/(2F0(G+F0))",
                value: ratio(j, 2.0 * f0 * gf),
            });
        }
        s1_terms.push(StepTerm {
            label: "kappa>0",
            value: kappa_positive_bound(
                l,
                g,
                f0,
                c,
                j,
                eps0,
                w0,
                b,
                a,
                inputs.has_continuous(),
                inputs.has_jumps(),
            ),
        });
        if inputs.has_continuous() {
            caps.push(StepTerm {
                label: "eps0/(L_g(G+sqrt(d)F0))",
                value: ratio(eps0, a),
            });
        }
    } else {
        b = g + if f0.is_finite() {
            sqrt_d * f0
        } else {
            f64::INFINITY
        };
        a = l * b;
    }
    caps.push(StepTerm {
        label: "1/L_g",
        value: 1.0 / l,
    });

    let s1 = s1_terms
        .iter()
        .map(|t| t.value)
        .fold(f64::INFINITY, f64::min);
    let mut terms = s1_terms;
    terms.extend(caps);
    let bind = terms
        .iter()
        .min_by(|x, y| x.value.total_cmp(&y.value))
        .expect("at least one term");
    Ok(StepSizeCertificate {
        inputs,
        b,
        a,
        s1,
        s_max: bind.value,
        binding: bind.label,
        terms,
    })
}

/// Largest `s` with `kappa(s) > 0`, solved in closed form on each branch of `kappa0`.
#[allow(clippy::too_many_arguments)]
fn kappa_positive_bound(
    l: f64,
    g: f64,
    f0: f64,
    c: f64,
    j: f64,
    eps0: f64,
    w0: f64,
    b: f64,
    a: f64,
    continuous: bool,
    jumps: bool,
) -> f64 {
    let mut bound = f64::INFINITY;
    if continuous {
        let num = c * w0 * eps0 - b * g;
        if num <= 0.0 {
            return 0.0;
        }
        bound = bound.min(num / (c * w0 * l * (1.0 - w0) * (g + f0) + a * b));
    }
    if jumps {
        let qa = a * b;
        let qb = 2.0 * f0 * (g + f0) + b * g;
        let root = if qa > 0.0 {
            let disc = qb * qb + 4.0 * qa * j;
            2.0 * j / (qb + disc.sqrt())
        } else {
            ratio(j, qb)
        };
        bound = bound.min(root);
    }
    bound
}

impl StepSizeCertificate {
    /// `kappa1`, `kappa2`, `kappa0` and `kappa` at step size `s`.
    pub fn kappas_at(&self, s: f64) -> Kappas {
        let i = &self.inputs;
        if !i.has_endpoints() {
            let inf = f64::INFINITY;
            return Kappas {
                kappa1: inf,
                kappa2: inf,
                kappa0: inf,
                kappa: inf,
            };
        }
        let gf = i.grad_bound + i.slope_bound;
        let kappa1 = if i.has_continuous() {
            let eps0 = i.eps0.unwrap_or(f64::INFINITY);
            s * i.curvature_gap * i.w0 * (eps0 - s * i.lipschitz * (1.0 - i.w0) * gf)
        } else {
            f64::INFINITY
        };
        let kappa2 = if i.has_jumps() {
            i.jump - 2.0 * s * i.slope_bound * gf
        } else {
            f64::INFINITY
        };
        let kappa0 = kappa1.min(kappa2);
        let kappa = kappa0 - s * (s * self.a + i.grad_bound) * self.b;
        Kappas {
            kappa1,
            kappa2,
            kappa0,
            kappa,
        }
    }

    /// The implicit fifth term of `s1`, evaluated with `kappa0` taken at `s`.
    pub fn implicit_kappa_term(&self, s: f64) -> f64 {
        let k0 = self.kappas_at(s).kappa0;
        let g = self.inputs.grad_bound;
        if !k0.is_finite() {
            return f64::INFINITY;
        }
        (-g + (g * g + 4.0 * self.a * k0 / self.b).sqrt()) / (2.0 * self.a)
    }

    /// Human-readable breakdown, one line per quantity.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let i = &self.inputs;
        let eps0 = i.eps0.map_or("-".to_string(), |e| e.to_string());
        out.push_str(&format!(
            "inputs: L_g={} G={} F0={} C={} J={} eps0={} s0={} R0={} w0={} d={}\n",
            i.lipschitz,
            i.grad_bound,
            i.slope_bound,
            i.curvature_gap,
            i.jump,
            eps0,
            i.margin,
            i.min_length,
            i.w0,
            i.dim
        ));
        out.push_str(&format!("A = {}\n", self.a));
        for t in &self.terms {
            out.push_str(&format!("term {:<26} {}\n", t.label, t.value));
        }
        out.push_str(&format!("s1 = {}\n", self.s1));
        out.push_str(&format!("s_max = {}\n", self.s_max));
        if self.s_max > 0.0 {
            let k = self.kappas_at(0.5 * self.s_max);
            out.push_str(&format!(
                "at s = s_max/2: kappa1={} kappa2={} kappa0={} kappa={}\n",
                k.kappa1, k.kappa2, k.kappa0, k.kappa
            ));
        } else {
            out.push_str("no step size satisfies the bounds\n");
        }
        out.push_str(&format!("binding term: {}\n", self.binding));
        out
    }
}

/// `1.5 * max ||grad g||` over the box hull of `points` inflated by `inflate`,
/// sampled uniformly and at random vertices, plus the points themselves.
pub fn estimate_gradient_bound(
    problem: &Problem,
    points: &[Array1<f64>],
    inflate: f64,
    seed: u64,
) -> Result<f64> {
    let d = problem.dim();
    let first = points.first().ok_or_else(|| {
        Error::InvalidArgument("need at least one point to bound the gradient".into())
    })?;
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in points {
        problem.check(p)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "gradient bound needs finite points".into(),
            ));
        }
        lo.zip_mut_with(p, |a, &b| *a = a.min(b));
        hi.zip_mut_with(p, |a, &b| *a = a.max(b));
    }
    if !(inflate >= 0.0 && inflate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "inflation must be finite and non-negative, got {inflate}"
        )));
    }
    lo -= inflate;
    hi += inflate;

    let loss = problem.loss();
    let mut best = 0.0f64;
    for p in points {
        best = best.max(super::norm(&loss.gradient(p)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array1::zeros(d);
    for k in 0..GRAD_SAMPLES {
        for i in 0..d {
            x[i] = if k % 2 == 0 {
                rng.random_range(lo[i]..=hi[i])
            } else if rng.random_bool(0.5) {
                hi[i]
            } else {
                lo[i]
            };
        }
        best = best.max(super::norm(&loss.gradient(&x)?));
    }
    Ok(GRAD_SAFETY * best)
}
