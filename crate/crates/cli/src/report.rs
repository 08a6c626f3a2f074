//! JSON run reports and the CSV results table.

use std::fs::OpenOptions;
use std::path::Path;

use ddelm::assembly::{FluxVariant, TraceBasis};
use ddelm::metrics::ErrorReport;
use ddelm::solvers::{Method, SolveReport, Timings};
use serde::Serialize;

use crate::config::RunConfig;

pub const CSV_HEADER: &str = "method,s,M,theta,flux_variant,trace_basis,l2,h1,iters,seconds,seed";

/// One solve as recorded in a report; coefficients are omitted.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub method: Method,
    pub s: usize,
    pub m: usize,
    pub theta: f64,
    pub flux_variant: FluxVariant,
    pub trace_basis: TraceBasis,
    pub seed: u64,
    pub problem: String,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    pub errors: Option<ErrorReport>,
    pub timings: Timings,
    pub local_ranks: Vec<usize>,
    pub n_mu: usize,
    pub n_delta: usize,
    /// Set when the solve aborted, e.g. on negative curvature.
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn from_report(rep: &SolveReport, errors: Option<ErrorReport>) -> Self {
        let c = &rep.config;
        Self {
            method: c.method,
            s: c.s,
            m: c.m,
            theta: c.theta,
            flux_variant: c.flux_variant,
            trace_basis: c.trace_basis,
            seed: c.seed,
            problem: c.problem.clone(),
            iterations: rep.iterations,
            converged: rep.converged,
            residuals: rep.residuals.clone(),
            errors,
            timings: rep.timings.clone(),
            local_ranks: rep.local_ranks.clone(),
            n_mu: rep.mu.len(),
            n_delta: rep.n_delta,
            failure: None,
        }
    }

    pub fn failed(config: &ddelm::solvers::SolverConfig, method: Method, theta: f64, message: String) -> Self {
        Self {
            method,
            s: config.s,
            m: config.m,
            theta,
            flux_variant: config.flux_variant,
            trace_basis: config.trace_basis,
            seed: config.seed,
            problem: config.problem.clone(),
            iterations: 0,
            converged: false,
            residuals: Vec::new(),
            errors: None,
            timings: Timings::default(),
            local_ranks: Vec::new(),
            n_mu: 0,
            n_delta: 0,
            failure: Some(message),
        }
    }

    pub fn ok(&self) -> bool {
        self.converged && self.failure.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: RunConfig,
    pub runs: Vec<RunRecord>,
}

impl RunReport {
    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(RunRecord::ok)
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    s: usize,
    #[serde(rename = "M")]
    m: usize,
    theta: f64,
    flux_variant: FluxVariant,
    trace_basis: TraceBasis,
    l2: Option<f64>,
    h1: Option<f64>,
    iters: usize,
    seconds: f64,
    seed: u64,
}

/// Append one row per run, writing the header only into an empty file.
pub fn append_csv(path: &Path, runs: &[RunRecord]) -> std::io::Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in runs {
        w.serialize(CsvRow {
            method: r.method.name(),
            s: r.s,
            m: r.m,
            theta: r.theta,
            flux_variant: r.flux_variant,
            trace_basis: r.trace_basis,
            l2: r.errors.as_ref().map(|e| e.l2),
            h1: r.errors.as_ref().map(|e| e.h1),
            iters: r.iterations,
            seconds: r.timings.total(),
            seed: r.seed,
        })
        .map_err(std::io::Error::other)?;
    }
    w.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}
