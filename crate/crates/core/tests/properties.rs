use ndarray::Array1;
use piecewise_prox::harness::{synth, SynthKind, SynthSpec};
use piecewise_prox::piecewise::{PenaltySpec, PiecewiseFn};
use piecewise_prox::problem::{Problem, Regularizer};
use piecewise_prox::prox::{prox_oracle, prox_surrogate, prox_true};
use piecewise_prox::smooth::{LossKind, SmoothLoss};
use piecewise_prox::solvers::{project_piecewise, run_solver, SolverConfig, SolverKind};
use proptest::prelude::*;

fn penalties() -> impl Strategy<Value = PenaltySpec> {
    prop_oneof![
        (0.05..2.0f64, 0.1..3.0f64).prop_map(|(lambda, b)| PenaltySpec::CappedL1 { lambda, b }),
        (0.05..2.0f64, 0.1..3.0f64, 0.0..0.9f64).prop_map(|(lambda, b, r)| {
            PenaltySpec::LeakyCappedL1 {
                lambda,
                b,
                beta: r * lambda,
            }
        }),
        (0.05..2.0f64, -2.0..2.0f64)
            .prop_map(|(lambda, tau)| PenaltySpec::Indicator { lambda, tau }),
        (0.05..2.0f64).prop_map(|lambda| PenaltySpec::L0 { lambda }),
        (0.05..2.0f64).prop_map(|lambda| PenaltySpec::L1 { lambda }),
    ]
}

/// Penalties whose surrogates lie above `f` everywhere.
fn majorized() -> impl Strategy<Value = PenaltySpec> {
    penalties().prop_filter("leaky extensions undercut f", |p| {
        !matches!(p, PenaltySpec::LeakyCappedL1 { .. })
    })
}

fn problem(kind: LossKind, n: usize, d: usize, seed: u64, penalty: &PenaltySpec) -> Problem {
    let synth_kind = match kind {
        LossKind::LeastSquares => SynthKind::LeastSquares,
        LossKind::Logistic => SynthKind::Logistic,
    };
    let mut spec = SynthSpec::new(synth_kind, n, d, seed);
    spec.noise = 0.1;
    let loss = SmoothLoss::new(kind, synth(&spec).unwrap().data).unwrap();
    Problem::uniform(loss, penalty.build().unwrap())
}

fn losses() -> impl Strategy<Value = LossKind> {
    prop_oneof![Just(LossKind::LeastSquares), Just(LossKind::Logistic)]
}

fn point(d: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(-3.0..3.0f64, d).prop_map(Array1::from_vec)
}

fn containing(f: &PiecewiseFn, x: f64) -> usize {
    f.pieces().iter().filter(|p| p.contains(x)).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pieces_tile_the_line(p in penalties(), x in -10.0..10.0f64) {
        let f = p.build().unwrap();
        prop_assert_eq!(containing(&f, x), 1);
        prop_assert!(f.piece(f.piece_index(x)).contains(x));
        for e in f.endpoints() {
            prop_assert_eq!(containing(&f, e.value), 1);
        }
    }

    #[test]
    fn surrogate_agrees_on_its_piece(p in penalties(), t in 0.0..1.0f64) {
        let f = p.build().unwrap();
        for (m, piece) in f.pieces().iter().enumerate() {
            let (lo, hi) = (piece.lower.value.max(-10.0), piece.upper.value.min(10.0));
            let x = lo + t * (hi - lo);
            if piece.contains(x) {
                prop_assert!((f.surrogate(m + 1).value(x) - f.evaluate(x)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn surrogate_extensions_are_affine(p in penalties(), a in 0.01..5.0f64, b in 0.01..5.0f64) {
        let f = p.build().unwrap();
        for sur in f.surrogates() {
            for (edge, dir) in [(sur.lower.value, -1.0), (sur.upper.value, 1.0)] {
                if !edge.is_finite() {
                    continue;
                }
                let (x1, x2) = (edge + dir * a.min(b), edge + dir * a.max(b));
                let xm = 0.5 * (x1 + x2);
                let mid = 0.5 * (sur.value(x1) + sur.value(x2));
                prop_assert!((sur.value(xm) - mid).abs() <= 1e-12 * (1.0 + mid.abs()));
            }
        }
    }

    #[test]
    fn extensions_lie_above_f_near_continuous_endpoints(p in penalties(), t in 0.0..1.0f64) {
        let f = p.build().unwrap();
        let margin = f.constants().margin;
        for sur in f.surrogates() {
            for (edge, dir) in [(sur.lower.value, -1.0), (sur.upper.value, 1.0)] {
                let continuous = f.endpoint_at(sur.piece, edge).is_some_and(|e| e.is_continuous());
                if continuous {
                    let x = edge + dir * t * margin;
                    prop_assert!(sur.value(x) >= f.evaluate(x) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn majorizing_surrogates(p in majorized(), x in -10.0..10.0f64) {
        let f = p.build().unwrap();
        for sur in f.surrogates() {
            prop_assert!(sur.value(x) >= f.evaluate(x) - 1e-12);
        }
    }

    #[test]
    fn slopes_drop_at_continuous_endpoints(p in penalties()) {
        let f = p.build().unwrap();
        let c = f.constants().curvature_gap;
        for e in f.endpoints().iter().filter(|e| e.is_continuous()) {
            let h = 1e-6;
            let left = (f.evaluate(e.value) - f.evaluate(e.value - h)) / h;
            let right = (f.evaluate(e.value + h) - f.evaluate(e.value)) / h;
            prop_assert!(left - right >= c - 1e-6);
            prop_assert!(c > 0.0);
        }
    }

    #[test]
    fn true_prox_matches_grid_oracle(p in penalties(), s in 1e-3..1.0f64, x in -5.0..5.0f64) {
        let f = p.build().unwrap();
        let obj = |v: f64| (v - x) * (v - x) / (2.0 * s) + f.evaluate(v);
        let v = prox_true(&f, s, x).unwrap();
        let half = (2.0 * s * f.evaluate(x)).sqrt() + 1e-4;
        let o = prox_oracle(|v| f.evaluate(v), s, x, half, 1e-4).unwrap();
        prop_assert!(obj(v) <= obj(o) + 1e-10);
    }

    #[test]
    fn convex_surrogate_prox_is_nonexpansive(p in penalties(), s in 1e-3..2.0f64, x in -5.0..5.0f64, y in -5.0..5.0f64) {
        let f = p.build().unwrap();
        for sur in f.surrogates().iter().filter(|s| s.is_convex()) {
            let px = prox_surrogate(sur, s, x).unwrap();
            let py = prox_surrogate(sur, s, y).unwrap();
            prop_assert!((px - py).abs() <= (x - y).abs() + 1e-12);
        }
    }

    #[test]
    fn projection_stays_in_piece_and_radius(p in penalties(), x in point(6), u in point(6), r in 0.01..2.0f64) {
        let reg = Regularizer::uniform(p.build().unwrap(), 6);
        let w = project_piecewise(&reg, &x, &u, r).unwrap();
        for i in 0..6 {
            let f = reg.function(i);
            let piece = f.piece(f.piece_index(x[i]));
            prop_assert!(w[i] >= piece.lower.value && w[i] <= piece.upper.value);
            prop_assert!((w[i] - x[i]).abs() <= r + 1e-15);
            if piece.contains(u[i]) && (u[i] - x[i]).abs() <= r {
                prop_assert_eq!(w[i], u[i]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_matches_finite_differences(kind in losses(), seed in 0..1000u64, x in point(5)) {
        let loss = SmoothLoss::new(kind, synth(&SynthSpec::new(
            if kind == LossKind::Logistic { SynthKind::Logistic } else { SynthKind::LeastSquares }, 30, 5, seed,
        )).unwrap().data).unwrap();
        let g = loss.gradient(&x).unwrap();
        for i in 0..5 {
            let h = 1e-6;
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (loss.value(&a).unwrap() - loss.value(&b).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()));
        }
    }

    #[test]
    fn gradient_secants_respect_lipschitz_bound(kind in losses(), seed in 0..1000u64, x in point(5), y in point(5)) {
        let p = problem(kind, 30, 5, seed, &PenaltySpec::Zero);
        let loss = p.loss();
        let dg = &loss.gradient(&x).unwrap() - &loss.gradient(&y).unwrap();
        let dx = &x - &y;
        let ng = dg.dot(&dg).sqrt();
        let nx = dx.dot(&dx).sqrt();
        prop_assert!(ng <= loss.lipschitz_bound() * nx * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn ppgd_and_apg_descend_monotonically(kind in losses(), seed in 0..1000u64, pen in majorized(), x0 in point(8)) {
        let p = problem(kind, 40, 8, seed, &pen);
        let cfg = SolverConfig { iterations: 60, record_timing: false, ..Default::default() };
        for solver in [SolverKind::Ppgd, SolverKind::Apg] {
            let t = run_solver(solver, &p, &x0, &cfg).unwrap();
            for w in t.records.windows(2) {
                prop_assert!(w[1].objective <= w[0].objective + 1e-12 * (1.0 + w[0].objective.abs()));
            }
        }
    }

    #[test]
    fn proximal_step_is_bounded_without_jumps(kind in losses(), seed in 0..1000u64, pen in penalties(), x0 in point(8)) {
        let p = problem(kind, 40, 8, seed, &pen);
        let c = p.regularizer().constants();
        prop_assume!(!c.jump.is_finite());
        let cfg = SolverConfig { iterations: 40, record_timing: false, ..Default::default() };
        let t = run_solver(SolverKind::Ppgd, &p, &x0, &cfg).unwrap();
        let f0 = c.slope_bound;
        for r in &t.records[1..] {
            let bound = t.step_size * (r.grad_norm + (8.0f64).sqrt() * f0);
            prop_assert!(r.step_length <= bound * (1.0 + 1e-12) + 1e-14);
        }
    }

    #[test]
    fn single_piece_ppgd_is_monotone_apg(kind in losses(), seed in 0..1000u64, lambda in 0.0..0.5f64, x0 in point(8)) {
        let pen = if lambda == 0.0 { PenaltySpec::Zero } else { PenaltySpec::L1 { lambda } };
        let p = problem(kind, 40, 8, seed, &pen);
        let cfg = SolverConfig { iterations: 80, record_timing: false, ..Default::default() };
        let a = run_solver(SolverKind::Ppgd, &p, &x0, &cfg).unwrap();
        let b = run_solver(SolverKind::Apg, &p, &x0, &cfg).unwrap();
        prop_assert_eq!(a.iterates, b.iterates);
    }

    #[test]
    fn piece_assignment_settles_after_last_transition(kind in losses(), seed in 0..1000u64, pen in penalties(), x0 in point(8)) {
        let p = problem(kind, 40, 8, seed, &pen);
        let cfg = SolverConfig { iterations: 100, record_timing: false, ..Default::default() };
        let t = run_solver(SolverKind::Ppgd, &p, &x0, &cfg).unwrap();
        if let Some(last) = t.last_transition() {
            let settled = &t.records[last].pieces;
            prop_assert!(t.records[last..].iter().all(|r| &r.pieces == settled));
        }
        let reg = p.regularizer();
        for (r, x) in t.records.iter().zip(&t.iterates) {
            prop_assert_eq!(&r.pieces, &reg.pieces(x));
        }
    }
}
