use std::io::Write;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Pgd,
    Apg,
    Ppgd,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Pgd => "pgd",
            SolverKind::Apg => "apg",
            SolverKind::Ppgd => "ppgd",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgd" => Ok(SolverKind::Pgd),
            "apg" => Ok(SolverKind::Apg),
            "ppgd" => Ok(SolverKind::Ppgd),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver `{other}` (expected pgd, apg or ppgd)"
            ))),
        }
    }
}

/// How the step that produced an iterate was resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NceOutcome {
    /// Initial point, or a solver without an acceptance test.
    None,
    /// `P(z) = P(x)`: `z` accepted without a crossing test.
    Same,
    /// Accepted: the crossing test passed, or the descent guard held.
    Accept,
    /// Rejected: the crossing test failed, or the descent guard did not hold.
    Reject,
    /// The surrogate descent guard failed, so NCE was not called.
    Guard,
}

impl NceOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            NceOutcome::None => "none",
            NceOutcome::Same => "same",
            NceOutcome::Accept => "accept",
            NceOutcome::Reject => "reject",
            NceOutcome::Guard => "guard",
        }
    }
}

/// State after iteration `k` (row 0 is the starting point).
#[derive(Clone, Debug, Serialize)]
pub struct IterRecord {
    pub k: usize,
    /// `F(x^k)`.
    pub objective: f64,
    /// `F_{P(x^{k-1})}(z^k)` for PPGD, `F(z^k)` for APG; NaN otherwise.
    pub surrogate_objective: f64,
    #[serde(skip)]
    pub pieces: Vec<u32>,
    /// `P(x^k) != P(x^{k-1})`.
    pub transition: bool,
    pub nce: NceOutcome,
    pub transitions_so_far: usize,
    /// `||z^k - w^{k-1}||`, the length of the proximal step.
    pub step_length: f64,
    /// Norm of the gradient at the point the step was taken from.
    pub grad_norm: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub solver: SolverKind,
    pub step_size: f64,
    pub w0: Option<f64>,
    pub records: Vec<IterRecord>,
    #[serde(skip)]
    pub iterates: Vec<Array1<f64>>,
    pub final_residual: f64,
    pub stopped_early: bool,
}

impl Trace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn transitions(&self) -> usize {
        self.records.last().map_or(0, |r| r.transitions_so_far)
    }

    /// Iteration index of the last transition event.
    pub fn last_transition(&self) -> Option<usize> {
        self.records
            .iter()
            .rev()
            .find(|r| r.transition)
            .map(|r| r.k)
    }

    pub fn final_iterate(&self) -> Option<&Array1<f64>> {
        self.iterates.last()
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.wall_ms)
    }

    /// Rows `k, F, F_surrogate_z, n_transitions_so_far, nce_flag, wall_ms`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record([
            "k",
            "F",
            "F_surrogate_z",
            "n_transitions_so_far",
            "nce_flag",
            "wall_ms",
        ])
        .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.objective.to_string(),
                r.surrogate_objective.to_string(),
                r.transitions_so_far.to_string(),
                r.nce.label().to_string(),
                r.wall_ms.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
