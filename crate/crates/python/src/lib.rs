//! Python bindings: penalties, problems, the three solvers, the step-size
//! certificate and JSON-configured experiments.

use ndarray::{Array1, Array2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use piecewise_prox::harness::{
    run_experiment, synth as synth_data, ExperimentConfig, SynthKind, SynthSpec,
};
use piecewise_prox::piecewise::{PenaltySpec, PiecewiseFn};
use piecewise_prox::problem::Problem as CoreProblem;
use piecewise_prox::prox::prox_true;
use piecewise_prox::smooth::{Dataset, LossKind, SmoothLoss};
use piecewise_prox::solvers::{
    certify_step_size, estimate_gradient_bound, run_solver, stationarity_residual,
    CertificateInputs, SolverConfig, SolverKind, Trace as CoreTrace,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, v: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| err(format!("unknown {what} `{v}`")))
}

/// A built-in piecewise convex penalty.
#[pyclass(frozen, module = "piecewise_prox_py")]
struct Penalty {
    spec: PenaltySpec,
    f: PiecewiseFn,
}

impl Penalty {
    fn make(spec: PenaltySpec) -> PyResult<Self> {
        let f = spec.build().map_err(err)?;
        Ok(Penalty { spec, f })
    }
}

#[pymethods]
impl Penalty {
    #[staticmethod]
    #[pyo3(signature = (lam, b = 1.0))]
    fn capped_l1(lam: f64, b: f64) -> PyResult<Self> {
        Self::make(PenaltySpec::CappedL1 { lambda: lam, b })
    }

    #[staticmethod]
    fn leaky_capped_l1(lam: f64, b: f64, beta: f64) -> PyResult<Self> {
        Self::make(PenaltySpec::LeakyCappedL1 {
            lambda: lam,
            b,
            beta,
        })
    }

    #[staticmethod]
    fn indicator(lam: f64, tau: f64) -> PyResult<Self> {
        Self::make(PenaltySpec::Indicator { lambda: lam, tau })
    }

    #[staticmethod]
    fn l0(lam: f64) -> PyResult<Self> {
        Self::make(PenaltySpec::L0 { lambda: lam })
    }

    #[staticmethod]
    fn l1(lam: f64) -> PyResult<Self> {
        Self::make(PenaltySpec::L1 { lambda: lam })
    }

    #[staticmethod]
    fn zero() -> PyResult<Self> {
        Self::make(PenaltySpec::Zero)
    }

    fn __call__(&self, x: f64) -> f64 {
        self.f.evaluate(x)
    }

    /// 1-based index of the piece containing `x`.
    fn piece_index(&self, x: f64) -> usize {
        self.f.piece_index(x)
    }

    #[getter]
    fn num_pieces(&self) -> usize {
        self.f.num_pieces()
    }

    /// `argmin_v (v - x)^2 / (2s) + f(v)`.
    fn prox(&self, s: f64, x: f64) -> PyResult<f64> {
        prox_true(&self.f, s, x).map_err(err)
    }

    /// Structural constants `C`, `J`, `F0`, `R0` and `s0`.
    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.f.constants();
        let d = PyDict::new(py);
        d.set_item("C", c.curvature_gap)?;
        d.set_item("J", c.jump)?;
        d.set_item("F0", c.slope_bound)?;
        d.set_item("R0", c.min_length)?;
        d.set_item("s0", c.margin)?;
        Ok(d)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Penalty({:?})", self.spec)
    }
}

/// `g(x) + sum_i f(x_i)` for a least-squares or logistic loss `g`.
#[pyclass(frozen, module = "piecewise_prox_py")]
struct Problem {
    inner: CoreProblem,
}

#[pymethods]
impl Problem {
    #[new]
    fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        loss: &str,
        penalty: &Penalty,
    ) -> PyResult<Self> {
        let n = features.len();
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != d) {
            return Err(err("feature rows differ in length"));
        }
        let flat: Vec<f64> = features.into_iter().flatten().collect();
        let x = Array2::from_shape_vec((n, d), flat).map_err(err)?;
        let data = Dataset::new(x, Array1::from_vec(labels)).map_err(err)?;
        let loss = SmoothLoss::new(parse::<LossKind>("loss", loss)?, data).map_err(err)?;
        Ok(Problem {
            inner: CoreProblem::uniform(loss, penalty.f.clone()),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.loss().lipschitz_bound()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&Array1::from_vec(x)).map_err(err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .loss()
            .gradient(&Array1::from_vec(x))
            .map_err(err)?
            .to_vec())
    }

    fn residual(&self, x: Vec<f64>, s: f64) -> PyResult<f64> {
        stationarity_residual(&self.inner, &Array1::from_vec(x), s).map_err(err)
    }

    /// Step-size certificate with gradient bound `grad_bound`, estimated
    /// around `points` when omitted.
    #[pyo3(signature = (grad_bound = None, eps0 = None, w0 = 0.5, points = None))]
    fn certify<'py>(
        &self,
        py: Python<'py>,
        grad_bound: Option<f64>,
        eps0: Option<f64>,
        w0: f64,
        points: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let g = match grad_bound {
            Some(g) => g,
            None => {
                let pts: Vec<Array1<f64>> = match points {
                    Some(p) => p.into_iter().map(Array1::from_vec).collect(),
                    None => vec![Array1::zeros(self.inner.dim())],
                };
                estimate_gradient_bound(&self.inner, &pts, 1.0, 0).map_err(err)?
            }
        };
        let cert = certify_step_size(CertificateInputs::from_problem(&self.inner, g, eps0, w0))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("grad_bound", g)?;
        d.set_item("s1", cert.s1)?;
        d.set_item("s_max", cert.s_max)?;
        d.set_item("binding", cert.binding)?;
        let terms = PyDict::new(py);
        for t in &cert.terms {
            terms.set_item(t.label, t.value)?;
        }
        d.set_item("terms", terms)?;
        Ok(d)
    }
}

/// Per-iteration record of a solver run.
#[pyclass(frozen, module = "piecewise_prox_py")]
struct Trace {
    inner: CoreTrace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn solver(&self) -> &'static str {
        self.inner.solver.name()
    }

    #[getter]
    fn step_size(&self) -> f64 {
        self.inner.step_size
    }

    #[getter]
    fn objectives(&self) -> Vec<f64> {
        self.inner.objectives()
    }

    #[getter]
    fn transitions(&self) -> usize {
        self.inner.transitions()
    }

    #[getter]
    fn last_transition(&self) -> Option<usize> {
        self.inner.last_transition()
    }

    #[getter]
    fn final_objective(&self) -> f64 {
        self.inner.final_objective()
    }

    #[getter]
    fn final_residual(&self) -> f64 {
        self.inner.final_residual
    }

    #[getter]
    fn x(&self) -> Option<Vec<f64>> {
        self.inner.final_iterate().map(|x| x.to_vec())
    }

    fn to_csv(&self) -> PyResult<String> {
        self.inner.to_csv_string().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

/// Runs `solver` (`pgd`, `apg` or `ppgd`) from `x0` (zero by default).
#[pyfunction]
#[pyo3(signature = (problem, solver = "ppgd", x0 = None, s = None, w0 = 0.5, iterations = 100, tolerance = None))]
fn solve(
    problem: &Problem,
    solver: &str,
    x0: Option<Vec<f64>>,
    s: Option<f64>,
    w0: f64,
    iterations: usize,
    tolerance: Option<f64>,
) -> PyResult<Trace> {
    let kind: SolverKind = solver.parse().map_err(err)?;
    let x0 = x0.map_or_else(|| Array1::zeros(problem.inner.dim()), Array1::from_vec);
    let cfg = SolverConfig {
        step_size: s,
        w0,
        iterations,
        tolerance,
        record_timing: false,
        store_iterates: false,
    };
    let inner = run_solver(kind, &problem.inner, &x0, &cfg).map_err(err)?;
    Ok(Trace { inner })
}

/// `(features, labels, x_star)`.
type SynthOutput = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

/// Synthetic data: `(features, labels, x_star)`.
#[pyfunction]
#[pyo3(signature = (generator, n, d, seed = 0, sparsity = 0.1, noise = 0.0))]
fn synth(
    generator: &str,
    n: usize,
    d: usize,
    seed: u64,
    sparsity: f64,
    noise: f64,
) -> PyResult<SynthOutput> {
    let mut spec = SynthSpec::new(parse::<SynthKind>("generator", generator)?, n, d, seed);
    spec.sparsity = sparsity;
    spec.noise = noise;
    let out = synth_data(&spec).map_err(err)?;
    let rows = out
        .data
        .features
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    Ok((rows, out.data.labels.to_vec(), out.x_star.to_vec()))
}

/// Runs a JSON experiment config and returns the JSON report.
#[pyfunction]
fn run_config(config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    run_experiment(&cfg).map_err(err)?.to_json().map_err(err)
}

#[pymodule]
fn piecewise_prox_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Penalty>()?;
    m.add_class::<Problem>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
