use std::path::PathBuf;
use std::process::Command;

use piecewise_prox::cli::{help_text, run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/help.txt")
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("piecewise-prox").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn help_matches_golden_file() {
    let help = help_text();
    let path = golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() || !path.exists() {
        std::fs::write(&path, &help).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        help, golden,
        "help text drifted; rerun with UPDATE_GOLDEN=1"
    );
}

#[test]
fn help_lists_every_flag() {
    let help = help_text();
    for flag in [
        "solve",
        "benchmark",
        "prox-check",
        "certify",
        "--config",
        "--loss",
        "--penalty",
        "--lambda",
        "--b",
        "--beta",
        "--tau",
        "--data-kind",
        "--generator",
        "--n",
        "--d",
        "--sparsity",
        "--noise",
        "--condition",
        "--seed",
        "--paths",
        "--classes",
        "--per-class",
        "--output-dir",
        "--timing",
        "--s",
        "--w0",
        "--iterations",
        "-K",
        "--tolerance",
        "--solver",
        "--solvers",
        "--x-min",
        "--x-max",
        "--points",
        "--resolution",
        "--lipschitz",
        "--grad-bound",
        "--f0",
        "--curvature-gap",
        "--jump",
        "--eps0",
        "--s0",
        "--r0",
        "--dim",
    ] {
        assert!(help.contains(flag), "help is missing {flag}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(invoke(&["--help"]).0, EXIT_OK);
    assert_eq!(invoke(&["--version"]).0, EXIT_OK);
    let (code, _, err) = invoke(&["solve", "--no-such-flag"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--no-such-flag"));
    assert_eq!(invoke(&[]).0, EXIT_USAGE);
    let (code, _, err) = invoke(&["solve", "--penalty", "bogus"]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.starts_with("error:"));
}

#[test]
fn solve_reports_objective() {
    let (code, out, _) = invoke(&[
        "solve",
        "--loss",
        "least_squares",
        "--generator",
        "least_squares",
        "--n",
        "40",
        "--d",
        "8",
        "--seed",
        "2",
        "--solver",
        "ppgd",
        "-K",
        "50",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("final objective: "));
    assert!(out.contains("stationarity residual: "));
}

#[test]
fn prox_check_gaps_are_tiny() {
    let (code, out, _) = invoke(&[
        "prox-check",
        "--penalty",
        "l0",
        "--lambda",
        "0.3",
        "--points",
        "11",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("x,closed_form,oracle,gap"));
    assert_eq!(
        out.lines().filter(|l| l.split(',').count() == 4).count(),
        12
    );
}

#[test]
fn certify_with_explicit_constants() {
    let (code, out, _) = invoke(&[
        "certify",
        "--lipschitz",
        "1",
        "--grad-bound",
        "0.1",
        "--f0",
        "0.2",
        "--jump",
        "1",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("binding term: "));
}

#[test]
fn benchmark_binary_writes_traces_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("experiment.json");
    let json = serde_json::json!({
        "loss": "logistic",
        "penalty": {"kind": "capped_l1", "params": {"lambda": 0.05, "b": 1.0}},
        "data": {"kind": "synthetic", "generator": "logistic", "n": 80, "d": 10, "seed": 4},
        "solvers": [{"name": "pgd", "K": 40}, {"name": "apg", "K": 40}, {"name": "ppgd", "K": 40}],
        "output_dir": dir.path().join("out"),
    });
    std::fs::write(&config, json.to_string()).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_piecewise-prox"))
        .args(["benchmark", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for name in ["pgd.csv", "apg.csv", "ppgd.csv", "report.json"] {
        let path = dir.path().join("out").join(name);
        assert!(path.exists(), "missing {name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("out/ppgd.csv")).unwrap();
    assert_eq!(csv.lines().count(), 42);
}
