use ndarray::Array1;

use super::{
    distance, extrapolate, norm, tk_next, NceOutcome, Recorder, SolverConfig, SolverKind, Step,
    Trace,
};
use crate::error::{Error, Result};
use crate::piecewise::PiecewiseFn;
use crate::problem::{Problem, Regularizer};
use crate::prox::prox_vector;

/// Clamps each `u_i` to the closure of piece `P(x_i)` intersected with `[x_i - r0, x_i + r0]`.
pub fn project_piecewise(
    reg: &Regularizer,
    x: &Array1<f64>,
    u: &Array1<f64>,
    r0: f64,
) -> Result<Array1<f64>> {
    if x.len() != reg.dim() || u.len() != reg.dim() {
        return Err(Error::DimensionMismatch {
            expected: reg.dim(),
            got: if x.len() != reg.dim() {
                x.len()
            } else {
                u.len()
            },
        });
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "projection radius must be positive, got {r0}"
        )));
    }
    Ok(Array1::from_iter((0..reg.dim()).map(|i| {
        let f = reg.function(i);
        let p = f.piece(f.piece_index(x[i]));
        let lo = p.lower.value.max(x[i] - r0);
        let hi = p.upper.value.min(x[i] + r0);
        u[i].clamp(lo, hi)
    })))
}

/// Endpoint of piece `m` in the closed segment between `w` and `z`, closest to `w`.
pub fn crossing_endpoint(f: &PiecewiseFn, m: usize, w: f64, z: f64) -> Option<f64> {
    let p = f.piece(m);
    let (a, b) = if w <= z { (w, z) } else { (z, w) };
    [p.lower.value, p.upper.value]
        .into_iter()
        .filter(|q| q.is_finite() && *q >= a && *q <= b)
        .min_by(|q1, q2| (q1 - w).abs().total_cmp(&(q2 - w).abs()))
}

/// Negative-curvature exploitation: decides whether `z` may leave the pieces of `x`.
pub fn nce(
    reg: &Regularizer,
    x: &Array1<f64>,
    z: &Array1<f64>,
    w: &Array1<f64>,
    w0: f64,
) -> Result<(Array1<f64>, NceOutcome)> {
    let d = reg.dim();
    for v in [x, z, w] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    let px = reg.pieces(x);
    let pz = reg.pieces(z);
    if px == pz {
        return Ok((z.clone(), NceOutcome::Same));
    }
    let mut flag = false;
    let mut out = z.clone();
    for i in 0..d {
        if px[i] == pz[i] {
            continue;
        }
        let f = reg.function(i);
        let m = px[i] as usize;
        let q = crossing_endpoint(f, m, w[i], z[i]).ok_or(Error::MissingEndpoint {
            coordinate: i,
            piece: m,
            w: w[i],
            z: z[i],
        })?;
        let continuous = f.endpoint_at(m, q).is_some_and(|e| e.is_continuous());
        if continuous {
            let d0 = (z[i] - w[i]).abs();
            let d1 = (z[i] - q).abs();
            if d1 >= w0 * d0 {
                flag = true;
            }
        } else {
            flag = true;
            let dest = f.piece(pz[i] as usize);
            if dest.is_single_point() && dest.lower.value == q {
                out[i] = q;
            }
        }
    }
    Ok(if flag {
        (out, NceOutcome::Accept)
    } else {
        (x.clone(), NceOutcome::Reject)
    })
}

/// Projected proximal gradient descent from `x0`.
pub fn ppgd(problem: &Problem, x0: &Array1<f64>, cfg: &SolverConfig) -> Result<Trace> {
    problem.check(x0)?;
    cfg.check_w0()?;
    let s = cfg.resolve_step(problem)?;
    let reg = problem.regularizer();
    let loss = problem.loss();
    let r0 = reg.constants().min_length;

    let mut fx = problem.objective(x0)?;
    let mut rec = Recorder::new(SolverKind::Ppgd, s, Some(cfg.w0), cfg, problem, x0, fx)?;
    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut z = x0.clone();
    let (mut t_prev, mut t) = (0.0, 1.0);

    for k in 1..=cfg.iterations {
        let u = extrapolate(&x, &x_prev, &z, t_prev, t)?;
        let w = project_piecewise(reg, &x, &u, r0)?;
        let grad = loss.gradient(&w)?;
        let v = &w - &(s * &grad);
        let z_new = prox_vector(&reg.surrogates(rec.pieces()), s, &v)?;
        t_prev = t;
        t = tk_next(t);

        let gz = loss.value(&z_new)?;
        let fpz = gz + reg.surrogate_value(rec.pieces(), &z_new);
        if !fpz.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: k });
        }
        let (x_new, outcome, f_new) = if fpz <= fx {
            let (next, outcome) = nce(reg, &x, &z_new, &w, cfg.w0)?;
            let f_new = match outcome {
                NceOutcome::Reject => fx,
                _ if next == z_new => gz + reg.value(&next),
                _ => problem.objective(&next)?,
            };
            (next, outcome, f_new)
        } else {
            (x.clone(), NceOutcome::Guard, fx)
        };
        let step = Step {
            objective: f_new,
            surrogate_objective: fpz,
            nce: outcome,
            step_length: distance(&z_new, &w),
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

    fn capped_reg() -> Regularizer {
        Regularizer::uniform(
            PenaltySpec::CappedL1 {
                lambda: 0.2,
                b: 1.0,
            }
            .build()
            .unwrap(),
            1,
        )
    }

    #[test]
    fn projection_examples() {
        let reg = capped_reg();
        let x = array![0.5];
        assert_eq!(
            project_piecewise(&reg, &x, &array![3.0], 2.0).unwrap(),
            array![1.0]
        );
        assert_eq!(
            project_piecewise(&reg, &x, &array![0.2], 2.0).unwrap(),
            array![0.2]
        );
        assert_eq!(
            project_piecewise(&reg, &x, &array![-5.0], 2.0).unwrap(),
            array![-1.0]
        );
        assert_eq!(
            project_piecewise(&reg, &x, &array![0.9], 0.1).unwrap()[0],
            0.6
        );
        assert_eq!(
            project_piecewise(&reg, &array![4.0], &array![-9.0], 2.0).unwrap(),
            array![2.0]
        );
        assert!(project_piecewise(&reg, &x, &array![0.0], 0.0).is_err());
    }

    #[test]
    fn nce_same_piece_returns_z() {
        let reg = capped_reg();
        let (out, o) = nce(&reg, &array![0.1], &array![0.5], &array![0.1], 0.5).unwrap();
        assert_eq!(out, array![0.5]);
        assert_eq!(o, NceOutcome::Same);
    }

    #[test]
    fn nce_continuous_crossing() {
        let reg = capped_reg();
        let (out, o) = nce(&reg, &array![0.9], &array![1.4], &array![0.9], 0.5).unwrap();
        assert_eq!((out, o), (array![1.4], NceOutcome::Accept));
        let (out, o) = nce(&reg, &array![0.9], &array![1.04], &array![0.9], 0.5).unwrap();
        assert_eq!((out, o), (array![0.9], NceOutcome::Reject));
    }

    #[test]
    fn nce_snaps_onto_single_point_piece() {
        let reg = Regularizer::uniform(PenaltySpec::L0 { lambda: 1.0 }.build().unwrap(), 2);
        let x = array![0.5, 2.0];
        let z = array![0.0, 1.5];
        let (out, o) = nce(&reg, &x, &z, &array![0.5, 2.0], 0.5).unwrap();
        assert_eq!(o, NceOutcome::Accept);
        assert_eq!(out, array![0.0, 1.5]);
    }

    #[test]
    fn nce_discontinuous_crossing_always_flags() {
        let reg = Regularizer::uniform(
            PenaltySpec::Indicator {
                lambda: 1.0,
                tau: 1.0,
            }
            .build()
            .unwrap(),
            1,
        );
        let (out, o) = nce(&reg, &array![0.5], &array![1.001], &array![0.999], 1.0).unwrap();
        assert_eq!((out, o), (array![1.001], NceOutcome::Accept));
    }

    #[test]
    fn nce_missing_endpoint() {
        let reg = capped_reg();
        let err = nce(&reg, &array![0.9], &array![1.4], &array![1.2], 0.5).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingEndpoint {
                coordinate: 0,
                piece: 2,
                ..
            }
        ));
    }

    #[test]
    fn crossing_endpoint_prefers_closer_to_w() {
        let f = PenaltySpec::CappedL1 {
            lambda: 0.2,
            b: 1.0,
        }
        .build()
        .unwrap();
        assert_eq!(crossing_endpoint(&f, 2, -1.5, 1.5), Some(-1.0));
        assert_eq!(crossing_endpoint(&f, 2, 1.5, -1.5), Some(1.0));
        assert_eq!(crossing_endpoint(&f, 2, 0.5, 1.5), Some(1.0));
        assert_eq!(crossing_endpoint(&f, 2, 0.0, 0.5), None);
    }

    #[test]
    fn zero_iterations_keep_x0() {
        let f = PenaltySpec::CappedL1 {
            lambda: 0.2,
            b: 1.0,
        }
        .build()
        .unwrap();
        let p = Problem::uniform(SmoothLoss::quadratic_1d(1.0, 2.0).unwrap(), f);
        let cfg = SolverConfig::with_step(0.5, 0);
        let tr = ppgd(&p, &array![0.3], &cfg).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.iterates, vec![array![0.3]]);
    }

    #[test]
    fn one_dimensional_capped_reaches_global_minimizer() {
        let f = PenaltySpec::CappedL1 {
            lambda: 0.2,
            b: 1.0,
        }
        .build()
        .unwrap();
        let p = Problem::uniform(SmoothLoss::quadratic_1d(1.0, 2.0).unwrap(), f);
        let tr = ppgd(&p, &array![0.0], &SolverConfig::with_step(0.5, 200)).unwrap();
        let x = tr.final_iterate().unwrap()[0];
        let grid = (0..=100_000)
            .map(|j| -5.0 + j as f64 * 1e-4)
            .min_by(|a, b| {
                let fa = p.objective(&array![*a]).unwrap();
                let fb = p.objective(&array![*b]).unwrap();
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((x - grid).abs() < 1e-3, "ppgd {x} vs grid {grid}");
    }
}
