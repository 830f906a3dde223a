use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{load_csv, load_idx, subsample_binary, synth, SynthSpec};
use crate::error::{Error, Result};
use crate::piecewise::{PenaltySpec, StructuralConstants};
use crate::problem::Problem;
use crate::smooth::{Dataset, LossKind, SmoothLoss};
use crate::solvers::{run_solver, SolverConfig, SolverKind, Trace};

/// Caps the number of solver runs executed in parallel.
pub const THREADS_ENV: &str = "PIECEWISE_PROX_THREADS";
/// Reference runs for rate fitting are this many times longer than the fitted run.
pub const REFERENCE_FACTOR: usize = 5;
const REFERENCE_SHIFT: f64 = 1e-12;
const MIN_RATE_POINTS: usize = 20;
const REPORT_TAIL: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Synthetic(SynthSpec),
    /// Headerless numeric CSV, label in the last column.
    Csv {
        paths: Vec<PathBuf>,
    },
    /// IDX images and labels, reduced to two classes.
    Idx {
        paths: Vec<PathBuf>,
        classes: [u8; 2],
        per_class: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl DataSpec {
    fn with_seed(&self, seed: Option<u64>) -> DataSpec {
        let mut out = self.clone();
        if let Some(s) = seed {
            match &mut out {
                DataSpec::Synthetic(spec) => spec.seed = s,
                DataSpec::Idx { seed, .. } => *seed = s,
                DataSpec::Csv { .. } => {}
            }
        }
        out
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSpec::Synthetic(spec) => Ok(synth(spec)?.data),
            DataSpec::Csv { paths } => match paths.as_slice() {
                [p] => load_csv(p),
                _ => Err(Error::Config(format!(
                    "csv data takes one path, got {}",
                    paths.len()
                ))),
            },
            DataSpec::Idx {
                paths,
                classes,
                per_class,
                seed,
            } => match paths.as_slice() {
                [images, labels] => subsample_binary(
                    &load_idx(images, labels)?,
                    classes[0],
                    classes[1],
                    *per_class,
                    *seed,
                ),
                _ => Err(Error::Config(format!(
                    "idx data takes an image path and a label path, got {} paths",
                    paths.len()
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub name: SolverKind,
    /// Step size; defaults to `1 / (2 L_g)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<f64>,
    #[serde(rename = "K")]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl SolverSpec {
    pub fn new(name: SolverKind, iterations: usize) -> Self {
        SolverSpec {
            name,
            s: None,
            w0: None,
            iterations,
            tolerance: None,
        }
    }

    fn solver_config(&self, record_timing: bool) -> SolverConfig {
        let mut cfg = SolverConfig {
            step_size: self.s,
            iterations: self.iterations,
            tolerance: self.tolerance,
            record_timing,
            store_iterates: false,
            ..Default::default()
        };
        if let Some(w0) = self.w0 {
            cfg.w0 = w0;
        }
        cfg
    }
}

/// One experiment: a problem, a starting point and the solvers to race on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub loss: LossKind,
    pub penalty: PenaltySpec,
    pub data: DataSpec,
    pub solvers: Vec<SolverSpec>,
    /// Overrides the seed of the data source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Starting point; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Fill the `wall_ms` column; off keeps output byte-for-byte reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::Config("at least one solver is required".into()));
        }
        for s in &self.solvers {
            if s.iterations == 0 {
                return Err(Error::Config(format!(
                    "solver {} needs K >= 1",
                    s.name.name()
                )));
            }
        }
        let paths: &[PathBuf] = match &self.data {
            DataSpec::Synthetic(_) => &[],
            DataSpec::Csv { paths } | DataSpec::Idx { paths, .. } => paths,
        };
        if let Some(p) = paths.iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!(
                "data file {} does not exist",
                p.display()
            )));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let data = self.data.with_seed(self.seed).load()?;
        let loss = SmoothLoss::new(self.loss, Arc::new(data))?;
        let f = self.penalty.build()?;
        Ok(Problem::uniform(loss, f))
    }

    pub fn initial_point(&self, d: usize) -> Result<Array1<f64>> {
        match &self.x0 {
            None => Ok(Array1::zeros(d)),
            Some(v) if v.len() == d => Ok(Array1::from_vec(v.clone())),
            Some(v) => Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            }),
        }
    }

    fn output_names(&self) -> Vec<String> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in &self.solvers {
            *counts.entry(s.name.name()).or_default() += 1;
        }
        self.solvers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if counts[s.name.name()] > 1 {
                    format!("{}_{i}", s.name.name())
                } else {
                    s.name.name().to_string()
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProblemSummary {
    pub n: usize,
    pub d: usize,
    pub lipschitz: f64,
    pub constants: StructuralConstants,
    pub initial_objective: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverSummary {
    pub label: String,
    pub name: SolverKind,
    pub step_size: f64,
    pub w0: Option<f64>,
    pub iterations: usize,
    pub final_objective: f64,
    pub best_objective: f64,
    pub transitions: usize,
    pub last_transition: Option<usize>,
    /// Slope of `log(F - F_ref)` against `log k` over the last 60% of the run.
    pub rate_slope: f64,
    pub final_residual: f64,
    pub stopped_early: bool,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub problem: ProblemSummary,
    /// Smallest objective seen by any solver, minus `1e-12`.
    pub f_ref: f64,
    pub solvers: Vec<SolverSummary>,
    #[serde(skip)]
    pub traces: Vec<Trace>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn summary(&self, label: &str) -> Option<&SolverSummary> {
        self.solvers.iter().find(|s| s.label == label)
    }

    pub fn trace(&self, label: &str) -> Option<&Trace> {
        self.solvers
            .iter()
            .position(|s| s.label == label)
            .map(|i| &self.traces[i])
    }
}

/// Value of `PIECEWISE_PROX_THREADS`, or the number of available cores.
pub fn thread_limit() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Builds the problem once, runs every solver from the same `x0`, and writes
/// `<label>.csv` plus `report.json` into the output directory when one is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let problem = config.build_problem()?;
    let x0 = config.initial_point(problem.dim())?;
    let initial_objective = problem.objective(&x0)?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_limit().min(config.solvers.len()))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let traces: Vec<Trace> = pool.install(|| {
        config
            .solvers
            .par_iter()
            .map(|spec| {
                run_solver(
                    spec.name,
                    &problem,
                    &x0,
                    &spec.solver_config(config.record_timing),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let f_ref = traces
        .iter()
        .flat_map(|t| t.records.iter().map(|r| r.objective))
        .fold(f64::INFINITY, f64::min)
        - REFERENCE_SHIFT;

    let labels = config.output_names();
    let mut solvers = Vec::with_capacity(traces.len());
    for ((spec, trace), label) in config.solvers.iter().zip(&traces).zip(labels) {
        let trace_csv = match &config.output_dir {
            Some(dir) => {
                let path = dir.join(format!("{label}.csv"));
                trace.save_csv(&path)?;
                Some(path)
            }
            None => None,
        };
        solvers.push(SolverSummary {
            label,
            name: spec.name,
            step_size: trace.step_size,
            w0: trace.w0,
            iterations: trace.iterations(),
            final_objective: trace.final_objective(),
            best_objective: trace.objectives().into_iter().fold(f64::INFINITY, f64::min),
            transitions: trace.transitions(),
            last_transition: trace.last_transition(),
            rate_slope: fit_rate(trace, REPORT_TAIL, f_ref)?,
            final_residual: trace.final_residual,
            stopped_early: trace.stopped_early,
            wall_ms: trace.total_wall_ms(),
            trace_csv,
        });
    }
    let report = Report {
        config: config.clone(),
        problem: ProblemSummary {
            n: problem.loss().data().n(),
            d: problem.dim(),
            lipschitz: problem.loss().lipschitz_bound(),
            constants: problem.regularizer().constants(),
            initial_objective,
        },
        f_ref,
        solvers,
        traces,
    };
    if let Some(dir) = &config.output_dir {
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

/// Least-squares slope of `log(F_k - f_ref)` against `log k` over the last
/// `tail_fraction` of the iterations. Gaps at or below the reference shift
/// count as converged; fewer than 20 usable points give `-inf`.
pub fn fit_rate(trace: &Trace, tail_fraction: f64, f_ref: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let rows = &trace.records[1.min(trace.records.len())..];
    let start = rows.len() - (tail_fraction * rows.len() as f64).round() as usize;
    let floor = 2.0 * REFERENCE_SHIFT * (1.0 + f_ref.abs());
    let pts: Vec<(f64, f64)> = rows[start..]
        .iter()
        .filter(|r| r.objective - f_ref > floor)
        .map(|r| ((r.k as f64).ln(), (r.objective - f_ref).ln()))
        .collect();
    if pts.len() < MIN_RATE_POINTS {
        return Ok(f64::NEG_INFINITY);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// `min F` over a run `REFERENCE_FACTOR` times longer than `cfg`, minus `1e-12`.
pub fn reference_objective(
    problem: &Problem,
    kind: SolverKind,
    x0: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<f64> {
    let long = SolverConfig {
        iterations: cfg.iterations * REFERENCE_FACTOR,
        tolerance: None,
        store_iterates: false,
        ..cfg.clone()
    };
    let t = run_solver(kind, problem, x0, &long)?;
    Ok(t.objectives().into_iter().fold(f64::INFINITY, f64::min) - REFERENCE_SHIFT)
}

/// Runs `kind` and fits its rate against a reference run of `reference`.
pub fn fit_rate_with_reference(
    problem: &Problem,
    kind: SolverKind,
    reference: SolverKind,
    x0: &Array1<f64>,
    cfg: &SolverConfig,
    tail_fraction: f64,
) -> Result<(Trace, f64)> {
    let trace = run_solver(kind, problem, x0, cfg)?;
    let f_ref = reference_objective(problem, reference, x0, cfg)?;
    let slope = fit_rate(&trace, tail_fraction, f_ref)?;
    Ok((trace, slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SynthKind;
    use crate::solvers::{IterRecord, NceOutcome};

    fn trace_from(objectives: &[f64]) -> Trace {
        Trace {
            solver: SolverKind::Pgd,
            step_size: 1.0,
            w0: None,
            records: objectives
                .iter()
                .enumerate()
                .map(|(k, &f)| IterRecord {
                    k,
                    objective: f,
                    surrogate_objective: f64::NAN,
                    pieces: vec![],
                    transition: false,
                    nce: NceOutcome::None,
                    transitions_so_far: 0,
                    step_length: 0.0,
                    grad_norm: 0.0,
                    wall_ms: 0.0,
                })
                .collect(),
            iterates: vec![],
            final_residual: 0.0,
            stopped_early: false,
        }
    }

    #[test]
    fn fit_rate_recovers_power_law() {
        let f: Vec<f64> = (0..200)
            .map(|k| 1.0 + 3.0 / ((k.max(1) as f64).powi(2)))
            .collect();
        let slope = fit_rate(&trace_from(&f), 0.6, 1.0).unwrap();
        assert!((slope + 2.0).abs() < 1e-9);
    }

    #[test]
    fn fit_rate_sentinel_on_constant() {
        let f = vec![0.5; 100];
        assert_eq!(
            fit_rate(&trace_from(&f), 0.6, 0.5 - 1e-12).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(fit_rate(&trace_from(&f), 0.0, 0.0).is_err());
    }

    fn small_config() -> ExperimentConfig {
        let mut spec = SynthSpec::new(SynthKind::Logistic, 60, 5, 2);
        spec.sparsity = 0.4;
        ExperimentConfig {
            loss: LossKind::Logistic,
            penalty: PenaltySpec::CappedL1 {
                lambda: 0.05,
                b: 1.0,
            },
            data: DataSpec::Synthetic(spec),
            solvers: vec![
                SolverSpec::new(SolverKind::Ppgd, 30),
                SolverSpec::new(SolverKind::Pgd, 30),
            ],
            seed: None,
            output_dir: None,
            x0: None,
            record_timing: false,
        }
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = small_config();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"K\":30"));
        assert!(json.contains("\"kind\":\"synthetic\""));
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config();
        cfg.solvers.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.solvers[0].iterations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.data = DataSpec::Csv {
            paths: vec!["/nonexistent/file.csv".into()],
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn experiment_writes_outputs_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.output_dir = Some(dir.path().to_path_buf());
        let a = run_experiment(&cfg).unwrap();
        let csv = std::fs::read(dir.path().join("ppgd.csv")).unwrap();
        let json = std::fs::read(dir.path().join("report.json")).unwrap();
        assert!(dir.path().join("pgd.csv").exists());
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(csv, std::fs::read(dir.path().join("ppgd.csv")).unwrap());
        assert_eq!(json, std::fs::read(dir.path().join("report.json")).unwrap());
        assert_eq!(a.traces.len(), 2);
        assert_eq!(a.summary("ppgd").unwrap().iterations, 30);
    }

    #[test]
    fn duplicate_solver_names_get_distinct_files() {
        let mut cfg = small_config();
        cfg.solvers = vec![
            SolverSpec::new(SolverKind::Apg, 5),
            SolverSpec::new(SolverKind::Apg, 5),
        ];
        assert_eq!(cfg.output_names(), vec!["apg_0", "apg_1"]);
    }
}
