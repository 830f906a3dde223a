use std::io::Cursor;

use ndarray::Array1;
use piecewise_prox::harness::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, read_csv, synth,
    SynthKind, SynthSpec,
};
use piecewise_prox::piecewise::PenaltySpec;
use piecewise_prox::problem::Problem;
use piecewise_prox::smooth::{LossKind, SmoothLoss};
use piecewise_prox::solvers::{run_solver, stationarity_residual, SolverConfig, SolverKind};

#[test]
fn every_single_byte_header_corruption_is_rejected() {
    let pixels: Vec<u8> = (0..3 * 4 * 5).map(|i| i as u8).collect();
    let images = encode_idx_images(&pixels, 3, 4, 5).unwrap();
    assert!(parse_idx_images(&images).is_ok());
    for pos in 0..16 {
        for delta in 1..=255u8 {
            let mut bad = images.clone();
            bad[pos] = bad[pos].wrapping_add(delta);
            assert!(
                parse_idx_images(&bad).is_err(),
                "byte {pos} + {delta} accepted"
            );
        }
    }
    let labels = encode_idx_labels(&[0, 1, 2]);
    assert!(parse_idx_labels(&labels).is_ok());
    for pos in 0..8 {
        for delta in 1..=255u8 {
            let mut bad = labels.clone();
            bad[pos] = bad[pos].wrapping_add(delta);
            assert!(
                parse_idx_labels(&bad).is_err(),
                "label byte {pos} + {delta} accepted"
            );
        }
    }
}

#[test]
fn csv_rejects_ragged_rows() {
    assert!(read_csv(Cursor::new("1,2,1\n3,4\n")).is_err());
    let d = read_csv(Cursor::new("# x1,x2,y\n1,2,1\n3,4,-1\n")).unwrap();
    assert_eq!((d.n(), d.d()), (2, 2));
}

#[test]
fn capped_l1_recovers_the_exact_support() {
    let mut spec = SynthSpec::new(SynthKind::LeastSquares, 120, 30, 21);
    spec.sparsity = 0.2;
    let truth = synth(&spec).unwrap();
    let p = Problem::uniform(
        SmoothLoss::new(LossKind::LeastSquares, truth.data).unwrap(),
        PenaltySpec::CappedL1 {
            lambda: 0.5,
            b: 0.05,
        }
        .build()
        .unwrap(),
    );
    let cfg = SolverConfig {
        iterations: 3000,
        record_timing: false,
        ..Default::default()
    };
    let t = run_solver(SolverKind::Ppgd, &p, &Array1::zeros(30), &cfg).unwrap();
    let x = t.final_iterate().unwrap();
    let found: Vec<bool> = x.iter().map(|v| *v != 0.0).collect();
    let expected: Vec<bool> = truth.x_star.iter().map(|v| *v != 0.0).collect();
    assert_eq!(found, expected);
    let err = (x - &truth.x_star)
        .mapv(f64::abs)
        .fold(0.0f64, |a, b| a.max(*b));
    assert!(err < 1e-6, "coefficient error {err}");
}

#[test]
fn accelerated_beats_plain_gradient_on_a_convex_problem() {
    let data = synth(&SynthSpec::new(SynthKind::Logistic, 200, 20, 5))
        .unwrap()
        .data;
    let p = Problem::uniform(
        SmoothLoss::new(LossKind::Logistic, data).unwrap(),
        PenaltySpec::L1 { lambda: 0.01 }.build().unwrap(),
    );
    let x0 = Array1::zeros(20);
    let cfg = SolverConfig {
        iterations: 200,
        record_timing: false,
        ..Default::default()
    };
    let apg = run_solver(SolverKind::Apg, &p, &x0, &cfg).unwrap();
    let pgd = run_solver(SolverKind::Pgd, &p, &x0, &cfg).unwrap();
    assert!(apg.final_objective() < pgd.final_objective());
    let s = apg.step_size;
    let ra = stationarity_residual(&p, apg.final_iterate().unwrap(), s).unwrap();
    let rp = stationarity_residual(&p, pgd.final_iterate().unwrap(), s).unwrap();
    assert!(ra < rp, "apg residual {ra}, pgd residual {rp}");
}

#[test]
fn early_stop_needs_a_stable_window() {
    let data = synth(&SynthSpec::new(SynthKind::LeastSquares, 50, 10, 3))
        .unwrap()
        .data;
    let p = Problem::uniform(
        SmoothLoss::new(LossKind::LeastSquares, data).unwrap(),
        PenaltySpec::CappedL1 {
            lambda: 0.1,
            b: 0.5,
        }
        .build()
        .unwrap(),
    );
    let cfg = SolverConfig {
        iterations: 5000,
        tolerance: Some(1e-8),
        record_timing: false,
        ..Default::default()
    };
    let t = run_solver(SolverKind::Ppgd, &p, &Array1::zeros(10), &cfg).unwrap();
    assert!(t.stopped_early);
    assert!(t.final_residual < 1e-8);
    let k = t.iterations();
    assert!(t.last_transition().is_none_or(|last| k - last >= 10));
}
