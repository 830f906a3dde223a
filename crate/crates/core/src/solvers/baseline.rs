use ndarray::Array1;

use super::{
    distance, extrapolate, norm, tk_next, NceOutcome, Recorder, SolverConfig, SolverKind, Step,
    Trace,
};
use crate::error::{Error, ProxError, Result};
use crate::problem::{Problem, Regularizer};
use crate::prox::prox_true;

/// Coordinatewise prox of the true regularizer.
pub fn prox_true_vector(reg: &Regularizer, s: f64, v: &Array1<f64>) -> Result<Array1<f64>> {
    if v.len() != reg.dim() {
        return Err(Error::DimensionMismatch {
            expected: reg.dim(),
            got: v.len(),
        });
    }
    let mut out = Array1::zeros(v.len());
    for (i, &vi) in v.iter().enumerate() {
        out[i] = prox_true(reg.function(i), s, vi).map_err(|e| ProxError::Coordinate {
            coordinate: i,
            source: Box::new(e),
        })?;
    }
    Ok(out)
}

/// Proximal gradient descent: `x <- prox_{sh}(x - s grad g(x))`.
pub fn pgd(problem: &Problem, x0: &Array1<f64>, cfg: &SolverConfig) -> Result<Trace> {
    problem.check(x0)?;
    let s = cfg.resolve_step(problem)?;
    let reg = problem.regularizer();
    let loss = problem.loss();
    let mut rec = Recorder::new(
        SolverKind::Pgd,
        s,
        None,
        cfg,
        problem,
        x0,
        problem.objective(x0)?,
    )?;
    let mut x = x0.clone();
    for _ in 0..cfg.iterations {
        let grad = loss.gradient(&x)?;
        let v = &x - &(s * &grad);
        let next = prox_true_vector(reg, s, &v)?;
        let step = Step {
            objective: problem.objective(&next)?,
            surrogate_objective: f64::NAN,
            nce: NceOutcome::None,
            step_length: distance(&next, &x),
            grad_norm: norm(&grad),
        };
        x = next;
        if rec.push(problem, &x, step)? {
            break;
        }
    }
    rec.finish(problem, &x)
}

/// Monotone accelerated proximal gradient: accept `z` only if `F(z) <= F(x)`.
pub fn apg_monotone(problem: &Problem, x0: &Array1<f64>, cfg: &SolverConfig) -> Result<Trace> {
    problem.check(x0)?;
    let s = cfg.resolve_step(problem)?;
    let reg = problem.regularizer();
    let loss = problem.loss();
    let mut fx = problem.objective(x0)?;
    let mut rec = Recorder::new(SolverKind::Apg, s, None, cfg, problem, x0, fx)?;
    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut z = x0.clone();
    let (mut t_prev, mut t) = (0.0, 1.0);
    for k in 1..=cfg.iterations {
        let u = extrapolate(&x, &x_prev, &z, t_prev, t)?;
        let grad = loss.gradient(&u)?;
        let v = &u - &(s * &grad);
        let z_new = prox_true_vector(reg, s, &v)?;
        t_prev = t;
        t = tk_next(t);
        let fz = problem.objective(&z_new)?;
        if !fz.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: k });
        }
        let (x_new, outcome, f_new) = if fz <= fx {
            (z_new.clone(), NceOutcome::Accept, fz)
        } else {
            (x.clone(), NceOutcome::Reject, fx)
        };
        let step = Step {
            objective: f_new,
            surrogate_objective: fz,
            nce: outcome,
            step_length: distance(&z_new, &u),
            grad_norm: norm(&grad),
        };
        x_prev = std::mem::replace(&mut x, x_new);
        z = z_new;
        fx = f_new;
        if rec.push(problem, &x, step)? {
            break;
        }
    }
    rec.finish(problem, &x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::PenaltySpec;
    use crate::smooth::SmoothLoss;
    use ndarray::array;

    fn capped_1d() -> Problem {
        let f = PenaltySpec::CappedL1 {
            lambda: 0.2,
            b: 1.0,
        }
        .build()
        .unwrap();
        Problem::uniform(SmoothLoss::quadratic_1d(1.0, 2.0).unwrap(), f)
    }

    #[test]
    fn pgd_one_dimensional() {
        let tr = pgd(
            &capped_1d(),
            &array![0.0],
            &SolverConfig::with_step(0.5, 200),
        )
        .unwrap();
        assert!((tr.final_iterate().unwrap()[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn apg_is_monotone() {
        let tr = apg_monotone(
            &capped_1d(),
            &array![-3.0],
            &SolverConfig::with_step(0.9, 100),
        )
        .unwrap();
        for w in tr.records.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        assert!((tr.final_iterate().unwrap()[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn smooth_only_pgd_is_gradient_descent() {
        let f = PenaltySpec::Zero.build().unwrap();
        let p = Problem::uniform(SmoothLoss::quadratic_1d(2.0, 1.0).unwrap(), f);
        let tr = pgd(&p, &array![3.0], &SolverConfig::with_step(0.1, 3)).unwrap();
        let mut x = 3.0;
        for it in &tr.iterates[1..] {
            x -= 0.1 * 2.0 * (x - 1.0);
            assert!((it[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_step() {
        let cfg = SolverConfig::with_step(-1.0, 3);
        assert!(pgd(&capped_1d(), &array![0.0], &cfg).is_err());
        assert!(apg_monotone(
            &capped_1d(),
            &array![0.0, 1.0],
            &SolverConfig::with_step(0.1, 3)
        )
        .is_err());
    }
}
