//! PPGD with its projection and negative-curvature test, the PGD and
//! monotone APG baselines, and step-size certification.

mod baseline;
mod certificate;
mod ppgd;
mod trace;

use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub use baseline::{apg_monotone, pgd, prox_true_vector};
pub use certificate::{
    certify_step_size, estimate_gradient_bound, CertificateInputs, Kappas, StepSizeCertificate,
    StepTerm,
};
pub use ppgd::{crossing_endpoint, nce, ppgd, project_piecewise};
pub use trace::{IterRecord, NceOutcome, SolverKind, Trace};

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::prox::prox_vector;

/// Iterations without a transition required before early stopping.
pub const STABLE_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Step size `s`; `None` means `1 / (2 L_g)`.
    pub step_size: Option<f64>,
    /// NCE acceptance ratio `w0` in `(0, 1]`.
    pub w0: f64,
    pub iterations: usize,
    /// Stop once the stationarity residual drops below this and no
    /// transition happened in the last `STABLE_WINDOW` iterations.
    pub tolerance: Option<f64>,
    /// Record wall-clock time per iteration; off gives reproducible traces.
    pub record_timing: bool,
    pub store_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_size: None,
            w0: 0.5,
            iterations: 100,
            tolerance: None,
            record_timing: true,
            store_iterates: true,
        }
    }
}

impl SolverConfig {
    pub fn with_step(step_size: f64, iterations: usize) -> Self {
        SolverConfig {
            step_size: Some(step_size),
            iterations,
            ..Default::default()
        }
    }

    pub fn resolve_step(&self, problem: &Problem) -> Result<f64> {
        let s = match self.step_size {
            Some(s) => s,
            None => {
                let l = problem.loss().lipschitz_bound();
                if !(l > 0.0) {
                    return Err(Error::InvalidArgument(
                        "default step size needs a positive Lipschitz bound".into(),
                    ));
                }
                1.0 / (2.0 * l)
            }
        };
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {s}"
            )));
        }
        Ok(s)
    }

    fn check_w0(&self) -> Result<()> {
        if self.w0 > 0.0 && self.w0 <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "w0 must lie in (0, 1], got {}",
                self.w0
            )))
        }
    }
}

/// `t_{k+1} = (sqrt(1 + 4 t_k^2) + 1) / 2`.
pub fn tk_next(t: f64) -> f64 {
    ((1.0 + 4.0 * t * t).sqrt() + 1.0) / 2.0
}

/// `u = x + (t_prev / t)(z - x) + ((t_prev - 1) / t)(x - x_prev)`.
pub fn extrapolate(
    x: &Array1<f64>,
    x_prev: &Array1<f64>,
    z: &Array1<f64>,
    t_prev: f64,
    t: f64,
) -> Result<Array1<f64>> {
    for v in [x_prev, z] {
        if v.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
    }
    let a = t_prev / t;
    let b = (t_prev - 1.0) / t;
    Ok(ndarray::Zip::from(x)
        .and(x_prev)
        .and(z)
        .map_collect(|&xi, &pi, &zi| xi + a * (zi - xi) + b * (xi - pi)))
}

pub(crate) fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub(crate) fn distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `||x - prox(x - s grad g(x))|| / s`, with the prox taken on the surrogates of `P(x)`.
pub fn stationarity_residual(problem: &Problem, x: &Array1<f64>, s: f64) -> Result<f64> {
    problem.check(x)?;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {s}"
        )));
    }
    let reg = problem.regularizer();
    let pieces = reg.pieces(x);
    let grad = problem.loss().gradient(x)?;
    let v = x - &(s * &grad);
    let p = prox_vector(&reg.surrogates(&pieces), s, &v)?;
    Ok(distance(x, &p) / s)
}

/// Runs the named solver.
pub fn run_solver(
    kind: SolverKind,
    problem: &Problem,
    x0: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<Trace> {
    match kind {
        SolverKind::Pgd => pgd(problem, x0, cfg),
        SolverKind::Apg => apg_monotone(problem, x0, cfg),
        SolverKind::Ppgd => ppgd(problem, x0, cfg),
    }
}

/// Per-step data handed to the recorder.
pub(crate) struct Step {
    pub objective: f64,
    pub surrogate_objective: f64,
    pub nce: NceOutcome,
    pub step_length: f64,
    pub grad_norm: f64,
}

/// Builds a `Trace` row by row and handles early stopping.
pub(crate) struct Recorder<'a> {
    trace: Trace,
    cfg: &'a SolverConfig,
    start: Instant,
    pieces: Vec<u32>,
    transitions: usize,
    since_transition: usize,
}

impl<'a> Recorder<'a> {
    pub fn new(
        solver: SolverKind,
        step_size: f64,
        w0: Option<f64>,
        cfg: &'a SolverConfig,
        problem: &Problem,
        x0: &Array1<f64>,
        f0: f64,
    ) -> Result<Self> {
        if !f0.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: 0 });
        }
        let pieces = problem.regularizer().pieces(x0);
        let mut rec = Recorder {
            trace: Trace {
                solver,
                step_size,
                w0,
                records: Vec::with_capacity(cfg.iterations + 1),
                iterates: Vec::new(),
                final_residual: f64::NAN,
                stopped_early: false,
            },
            cfg,
            start: Instant::now(),
            pieces: pieces.clone(),
            transitions: 0,
            since_transition: 0,
        };
        rec.trace.records.push(IterRecord {
            k: 0,
            objective: f0,
            surrogate_objective: f64::NAN,
            pieces,
            transition: false,
            nce: NceOutcome::None,
            transitions_so_far: 0,
            step_length: f64::NAN,
            grad_norm: f64::NAN,
            wall_ms: 0.0,
        });
        if cfg.store_iterates {
            rec.trace.iterates.push(x0.clone());
        }
        Ok(rec)
    }

    /// Current piece assignment `P(x^k)`.
    pub fn pieces(&self) -> &[u32] {
        &self.pieces
    }

    /// Records `x^k`; returns true when the run should stop early.
    pub fn push(&mut self, problem: &Problem, x: &Array1<f64>, step: Step) -> Result<bool> {
        let k = self.trace.records.len();
        if !step.objective.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: k });
        }
        let pieces = problem.regularizer().pieces(x);
        let transition = pieces != self.pieces;
        if transition {
            self.transitions += 1;
            self.since_transition = 0;
        } else {
            self.since_transition += 1;
        }
        let wall_ms = if self.cfg.record_timing {
            self.start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.trace.records.push(IterRecord {
            k,
            objective: step.objective,
            surrogate_objective: step.surrogate_objective,
            pieces: pieces.clone(),
            transition,
            nce: step.nce,
            transitions_so_far: self.transitions,
            step_length: step.step_length,
            grad_norm: step.grad_norm,
            wall_ms,
        });
        self.pieces = pieces;
        if self.cfg.store_iterates {
            self.trace.iterates.push(x.clone());
        }
        if let Some(tol) = self.cfg.tolerance {
            if self.since_transition >= STABLE_WINDOW
                && stationarity_residual(problem, x, self.trace.step_size)? < tol
            {
                self.trace.stopped_early = true;
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn finish(mut self, problem: &Problem, x: &Array1<f64>) -> Result<Trace> {
        if !self.cfg.store_iterates {
            self.trace.iterates.push(x.clone());
        }
        self.trace.final_residual = stationarity_residual(problem, x, self.trace.step_size)?;
        Ok(self.trace)
    }
}
