//! Command-line front end: `solve`, `benchmark`, `prox-check` and `certify`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{
    run_experiment, DataSpec, ExperimentConfig, SolverSpec, SynthKind, SynthSpec,
};
use crate::piecewise::PenaltySpec;
use crate::prox::{prox_oracle, prox_true};
use crate::smooth::LossKind;
use crate::solvers::{
    certify_step_size, estimate_gradient_bound, run_solver, stationarity_residual,
    CertificateInputs, SolverKind,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "piecewise-prox",
    version,
    about = "Proximal gradient solvers for smooth losses with piecewise convex penalties"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solver on one problem and print the final objective and residual
    Solve(SolveArgs),
    /// Race several solvers on one problem and write traces plus a JSON report
    Benchmark(BenchmarkArgs),
    /// Compare the closed-form prox of a penalty with a grid-search oracle
    ProxCheck(ProxCheckArgs),
    /// Evaluate the step-size certificate and report the binding bound
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    /// Penalty kind: capped_l1, leaky_capped_l1, indicator, l0, l1 or zero
    #[arg(long)]
    pub penalty: Option<String>,
    /// Penalty weight lambda
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Cap of capped_l1 and leaky_capped_l1
    #[arg(long)]
    pub b: Option<f64>,
    /// Slope beyond the cap for leaky_capped_l1
    #[arg(long)]
    pub beta: Option<f64>,
    /// Threshold of the indicator penalty
    #[arg(long)]
    pub tau: Option<f64>,
}

impl PenaltyArgs {
    fn build(&self) -> Result<PenaltySpec> {
        let lambda = self.lambda.unwrap_or(0.2);
        let b = self.b.unwrap_or(1.0);
        let kind = self.penalty.as_deref().unwrap_or("capped_l1");
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::InvalidArgument(format!("penalty {kind} needs --{name}")))
        };
        Ok(match kind {
            "capped_l1" => PenaltySpec::CappedL1 { lambda, b },
            "leaky_capped_l1" => PenaltySpec::LeakyCappedL1 {
                lambda,
                b,
                beta: need("beta", self.beta)?,
            },
            "indicator" => PenaltySpec::Indicator {
                lambda,
                tau: need("tau", self.tau)?,
            },
            "l0" => PenaltySpec::L0 { lambda },
            "l1" => PenaltySpec::L1 { lambda },
            "zero" => PenaltySpec::Zero,
            other => return Err(Error::InvalidArgument(format!("unknown penalty `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Experiment config (JSON); its values win over conflicting flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Loss: least_squares or logistic
    #[arg(long)]
    pub loss: Option<String>,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Data source: synthetic, csv or idx
    #[arg(long = "data-kind")]
    pub data_kind: Option<String>,
    /// Synthetic generator: least_squares, logistic, ill_conditioned or two_class
    #[arg(long)]
    pub generator: Option<String>,
    /// Number of synthetic samples
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of synthetic features
    #[arg(long)]
    pub d: Option<usize>,
    /// Fraction of nonzero ground-truth coordinates
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Synthetic noise level
    #[arg(long)]
    pub noise: Option<f64>,
    /// Condition number for the ill_conditioned generator
    #[arg(long)]
    pub condition: Option<f64>,
    /// Data seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Data files: one CSV, or IDX images then labels
    #[arg(long, num_args = 1..)]
    pub paths: Vec<PathBuf>,
    /// The two IDX classes to keep, labelled +1 and -1
    #[arg(long, num_args = 2)]
    pub classes: Vec<u8>,
    /// IDX examples drawn per class
    #[arg(long = "per-class")]
    pub per_class: Option<usize>,
    /// Directory for traces and reports
    #[arg(long = "output-dir")]
    pub output_dir: Option<PathBuf>,
    /// Record wall-clock time in traces
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Step size (default 1/(2 L_g))
    #[arg(long)]
    pub s: Option<f64>,
    /// NCE acceptance ratio in (0, 1]
    #[arg(long)]
    pub w0: Option<f64>,
    /// Number of iterations
    #[arg(short = 'K', long = "iterations")]
    pub iterations: Option<usize>,
    /// Early-stopping tolerance on the stationarity residual
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Solver: pgd, apg or ppgd
    #[arg(long)]
    pub solver: Option<String>,
    #[command(flatten)]
    pub run: SolverArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Solvers to race, comma separated
    #[arg(long, value_delimiter = ',')]
    pub solvers: Vec<String>,
    #[command(flatten)]
    pub run: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ProxCheckArgs {
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Step size
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    /// Smallest input
    #[arg(long = "x-min", default_value_t = -3.0, allow_hyphen_values = true)]
    pub x_min: f64,
    /// Largest input
    #[arg(long = "x-max", default_value_t = 3.0, allow_hyphen_values = true)]
    pub x_max: f64,
    /// Number of inputs
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    /// Oracle grid spacing
    #[arg(long, default_value_t = 1e-6)]
    pub resolution: f64,
    /// Write prox_check.csv here instead of printing the table
    #[arg(long = "output-dir")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Lipschitz constant L_g; switches to explicit constants
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Gradient bound G (estimated from the problem when omitted)
    #[arg(long = "grad-bound")]
    pub grad_bound: Option<f64>,
    /// Slope bound F0
    #[arg(long)]
    pub f0: Option<f64>,
    /// Negative curvature gap C
    #[arg(long = "curvature-gap")]
    pub curvature_gap: Option<f64>,
    /// Jump value J
    #[arg(long)]
    pub jump: Option<f64>,
    /// Gradient margin eps0 at continuous endpoints
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Endpoint margin s0
    #[arg(long)]
    pub s0: Option<f64>,
    /// Minimum piece length R0
    #[arg(long)]
    pub r0: Option<f64>,
    /// NCE acceptance ratio
    #[arg(long, default_value_t = 0.5)]
    pub w0: f64,
    /// Dimension d
    #[arg(long)]
    pub dim: Option<usize>,
}

fn parse_kind<T: serde::de::DeserializeOwned>(what: &str, v: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| Error::InvalidArgument(format!("unknown {what} `{v}`")))
}

impl ProblemArgs {
    fn inline_flags(&self) -> Vec<&'static str> {
        let p = &self.penalty;
        let set = [
            ("--loss", self.loss.is_some()),
            ("--penalty", p.penalty.is_some()),
            ("--lambda", p.lambda.is_some()),
            ("--b", p.b.is_some()),
            ("--beta", p.beta.is_some()),
            ("--tau", p.tau.is_some()),
            ("--data-kind", self.data_kind.is_some()),
            ("--generator", self.generator.is_some()),
            ("--n", self.n.is_some()),
            ("--d", self.d.is_some()),
            ("--sparsity", self.sparsity.is_some()),
            ("--noise", self.noise.is_some()),
            ("--condition", self.condition.is_some()),
            ("--seed", self.seed.is_some()),
            ("--paths", !self.paths.is_empty()),
            ("--classes", !self.classes.is_empty()),
            ("--per-class", self.per_class.is_some()),
        ];
        set.into_iter()
            .filter(|(_, on)| *on)
            .map(|(n, _)| n)
            .collect()
    }

    fn data_spec(&self, loss: LossKind) -> Result<DataSpec> {
        match self.data_kind.as_deref().unwrap_or("synthetic") {
            "synthetic" => {
                let default_gen = match loss {
                    LossKind::LeastSquares => SynthKind::LeastSquares,
                    LossKind::Logistic => SynthKind::Logistic,
                };
                let kind = match &self.generator {
                    Some(g) => parse_kind("generator", g)?,
                    None => default_gen,
                };
                let mut spec = SynthSpec::new(
                    kind,
                    self.n.unwrap_or(500),
                    self.d.unwrap_or(50),
                    self.seed.unwrap_or(0),
                );
                if let Some(v) = self.sparsity {
                    spec.sparsity = v;
                }
                if let Some(v) = self.noise {
                    spec.noise = v;
                }
                if let Some(v) = self.condition {
                    spec.condition = v;
                }
                Ok(DataSpec::Synthetic(spec))
            }
            "csv" => Ok(DataSpec::Csv {
                paths: self.paths.clone(),
            }),
            "idx" => {
                let classes: [u8; 2] =
                    self.classes.as_slice().try_into().map_err(|_| {
                        Error::InvalidArgument("idx data needs --classes A B".into())
                    })?;
                Ok(DataSpec::Idx {
                    paths: self.paths.clone(),
                    classes,
                    per_class: self.per_class.ok_or_else(|| {
                        Error::InvalidArgument("idx data needs --per-class".into())
                    })?,
                    seed: self.seed.unwrap_or(0),
                })
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown data kind `{other}`"
            ))),
        }
    }

    /// The config file if given (warning about ignored flags), else one built from flags.
    fn resolve(&self, solvers: Vec<SolverSpec>, warn: &mut dyn Write) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            let mut cfg = ExperimentConfig::load(path)?;
            for flag in self.inline_flags() {
                let _ = writeln!(
                    warn,
                    "warning: {flag} ignored, the config file takes precedence"
                );
            }
            if cfg.output_dir.is_none() {
                cfg.output_dir = self.output_dir.clone();
            } else if self.output_dir.is_some() {
                let _ = writeln!(
                    warn,
                    "warning: --output-dir ignored, the config file takes precedence"
                );
            }
            cfg.record_timing |= self.timing;
            return Ok(cfg);
        }
        let loss = match &self.loss {
            Some(l) => parse_kind("loss", l)?,
            None => LossKind::Logistic,
        };
        let cfg = ExperimentConfig {
            loss,
            penalty: self.penalty.build()?,
            data: self.data_spec(loss)?,
            solvers,
            seed: None,
            output_dir: self.output_dir.clone(),
            x0: None,
            record_timing: self.timing,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SolverArgs {
    fn spec(&self, name: SolverKind) -> SolverSpec {
        SolverSpec {
            name,
            s: self.s,
            w0: self.w0,
            iterations: self.iterations.unwrap_or(300),
            tolerance: self.tolerance,
        }
    }

    fn any(&self) -> bool {
        self.s.is_some()
            || self.w0.is_some()
            || self.iterations.is_some()
            || self.tolerance.is_some()
    }
}

fn solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let kind: SolverKind = args.solver.as_deref().unwrap_or("ppgd").parse()?;
    let cfg = args.problem.resolve(vec![args.run.spec(kind)], err)?;
    let spec = if args.problem.config.is_some() {
        if args.solver.is_some() || args.run.any() {
            let _ = writeln!(
                err,
                "warning: solver flags ignored, the config file takes precedence"
            );
        }
        cfg.solvers[0].clone()
    } else {
        args.run.spec(kind)
    };
    let problem = cfg.build_problem()?;
    let x0 = cfg.initial_point(problem.dim())?;
    let mut scfg = crate::solvers::SolverConfig {
        step_size: spec.s,
        iterations: spec.iterations,
        tolerance: spec.tolerance,
        record_timing: cfg.record_timing,
        store_iterates: false,
        ..Default::default()
    };
    if let Some(w0) = spec.w0 {
        scfg.w0 = w0;
    }
    let trace = run_solver(spec.name, &problem, &x0, &scfg)?;
    let x = trace.final_iterate().expect("final iterate is always kept");
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        trace.save_csv(&dir.join(format!("{}.csv", spec.name.name())))?;
    }
    let nnz = x.iter().filter(|v| **v != 0.0).count();
    writeln!(out, "solver: {}", spec.name.name()).map_err(stdout_err)?;
    writeln!(out, "step size: {}", trace.step_size).map_err(stdout_err)?;
    writeln!(out, "iterations: {}", trace.iterations()).map_err(stdout_err)?;
    writeln!(out, "final objective: {}", trace.final_objective()).map_err(stdout_err)?;
    writeln!(
        out,
        "stationarity residual: {}",
        stationarity_residual(&problem, x, trace.step_size)?
    )
    .map_err(stdout_err)?;
    writeln!(out, "transitions: {}", trace.transitions()).map_err(stdout_err)?;
    writeln!(out, "nonzeros: {nnz} of {}", x.len()).map_err(stdout_err)?;
    Ok(())
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn benchmark(args: &BenchmarkArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let names = if args.solvers.is_empty() {
        vec!["pgd".to_string(), "apg".to_string(), "ppgd".to_string()]
    } else {
        args.solvers.clone()
    };
    let specs = names
        .iter()
        .map(|n| Ok(args.run.spec(n.parse()?)))
        .collect::<Result<Vec<_>>>()?;
    let cfg = args.problem.resolve(specs, err)?;
    if args.problem.config.is_some() && (!args.solvers.is_empty() || args.run.any()) {
        let _ = writeln!(
            err,
            "warning: solver flags ignored, the config file takes precedence"
        );
    }
    let report = run_experiment(&cfg)?;
    writeln!(
        out,
        "{:<10} {:>8} {:>22} {:>12} {:>10} {:>10}",
        "solver", "K", "final objective", "transitions", "slope", "wall_ms"
    )
    .map_err(stdout_err)?;
    for s in &report.solvers {
        writeln!(
            out,
            "{:<10} {:>8} {:>22.15e} {:>12} {:>10.3} {:>10.1}",
            s.label, s.iterations, s.final_objective, s.transitions, s.rate_slope, s.wall_ms
        )
        .map_err(stdout_err)?;
    }
    if let Some(dir) = &cfg.output_dir {
        writeln!(out, "wrote {}", dir.join("report.json").display()).map_err(stdout_err)?;
    }
    Ok(())
}

fn prox_check(args: &ProxCheckArgs, out: &mut dyn Write) -> Result<()> {
    if args.points < 1 || !(args.x_max >= args.x_min) {
        return Err(Error::InvalidArgument(
            "need --points >= 1 and --x-max >= --x-min".into(),
        ));
    }
    let f = args.penalty.build()?.build()?;
    let s = args.s;
    let obj = |x: f64, v: f64| (v - x) * (v - x) / (2.0 * s) + f.evaluate(v);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["x", "closed_form", "oracle", "gap"])
        .map_err(csv_err)?;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..args.points {
        let x = if args.points == 1 {
            args.x_min
        } else {
            args.x_min + (args.x_max - args.x_min) * i as f64 / (args.points - 1) as f64
        };
        let closed = prox_true(&f, s, x)?;
        let half = (2.0 * s * f.evaluate(x).max(0.0)).sqrt() + 2.0 * args.resolution;
        let oracle = prox_oracle(|v| f.evaluate(v), s, x, half, args.resolution)?;
        let gap = obj(x, closed) - obj(x, oracle);
        worst = worst.max(gap);
        w.write_record([x, closed, oracle, gap].map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    let table = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    match &args.output_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("prox_check.csv");
            std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
            writeln!(out, "wrote {}", path.display()).map_err(stdout_err)?;
        }
        None => out.write_all(&table).map_err(stdout_err)?,
    }
    writeln!(out, "max objective gap (closed form - oracle): {worst:e}").map_err(stdout_err)?;
    Ok(())
}

fn certify(args: &CertifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let inputs = match args.lipschitz {
        Some(l) => {
            let inf = f64::INFINITY;
            CertificateInputs {
                lipschitz: l,
                grad_bound: args.grad_bound.ok_or_else(|| {
                    Error::InvalidArgument("explicit constants need --grad-bound".into())
                })?,
                slope_bound: args.f0.unwrap_or(inf),
                curvature_gap: args.curvature_gap.unwrap_or(inf),
                jump: args.jump.unwrap_or(inf),
                eps0: args.eps0,
                margin: args.s0.unwrap_or(inf),
                min_length: args.r0.unwrap_or(inf),
                w0: args.w0,
                dim: args.dim.unwrap_or(1),
            }
        }
        None => {
            let cfg = args
                .problem
                .resolve(vec![SolverSpec::new(SolverKind::Ppgd, 1)], err)?;
            let problem = cfg.build_problem()?;
            let x0 = cfg.initial_point(problem.dim())?;
            let g = match args.grad_bound {
                Some(g) => g,
                None => {
                    let r0 = problem.regularizer().constants().min_length;
                    let inflate = if r0.is_finite() { r0 } else { 1.0 };
                    let g = estimate_gradient_bound(&problem, &[x0], inflate, cfg.seed.unwrap_or(0))?;
                    writeln!(out, "G = {g} (sampled estimate within {inflate} of x0, not a proven bound)")
                        .map_err(stdout_err)?;
                    g
                }
            };
            CertificateInputs::from_problem(&problem, g, args.eps0, args.w0)
        }
    };
    let cert = certify_step_size(inputs)?;
    out.write_all(cert.report().as_bytes())
        .map_err(stdout_err)?;
    Ok(())
}

/// Full help text of the top-level command and every subcommand.
pub fn help_text() -> String {
    let mut cmd = Cli::command();
    let mut out = cmd.render_long_help().to_string();
    for sub in ["solve", "benchmark", "prox-check", "certify"] {
        let sc = cmd.find_subcommand_mut(sub).expect("subcommand exists");
        out.push_str(&format!("\n=== {sub} ===\n"));
        out.push_str(&sc.render_long_help().to_string());
    }
    out
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a, out, err),
        Command::Benchmark(a) => benchmark(a, out, err),
        Command::ProxCheck(a) => prox_check(a, out),
        Command::Certify(a) => certify(a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("piecewise-prox").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, _, err) = run_capture(&["frobnicate"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, _) = run_capture(&["solve", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn certify_convex_binds_on_lipschitz() {
        let (code, out, _) = run_capture(&[
            "certify",
            "--lipschitz",
            "2",
            "--grad-bound",
            "1",
            "--dim",
            "3",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("binding term: 1/L_g"), "{out}");
    }

    #[test]
    fn certify_l1_problem_binds_on_lipschitz() {
        let (code, out, _) = run_capture(&["certify", "--penalty", "l1", "--n", "40", "--d", "5"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("binding term: 1/L_g"), "{out}");
    }

    #[test]
    fn runtime_errors_exit_2() {
        let (code, _, err) =
            run_capture(&["certify", "--penalty", "capped_l1", "--n", "40", "--d", "5"]);
        assert_eq!(code, EXIT_RUNTIME);
        assert!(err.starts_with("error: "));
        let (code, _, _) = run_capture(&["solve", "--penalty", "nope"]);
        assert_eq!(code, EXIT_RUNTIME);
    }

    #[test]
    fn solve_prints_objective_and_residual() {
        let (code, out, _) = run_capture(&[
            "solve", "--n", "50", "--d", "4", "-K", "20", "--lambda", "0.05",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("final objective: "));
        assert!(out.contains("stationarity residual: "));
    }

    #[test]
    fn prox_check_table() {
        let (code, out, _) = run_capture(&[
            "prox-check",
            "--penalty",
            "l0",
            "--points",
            "5",
            "--resolution",
            "1e-4",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.starts_with("x,closed_form,oracle,gap"));
        assert_eq!(out.lines().count(), 7);
    }
}
