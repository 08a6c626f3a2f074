//! Interface solvers: vanilla DDELM, the coarse-space variant and the
//! Neumann-to-Dirichlet accelerated variant, plus a dense reference path.

pub mod cg;
pub mod check;
pub mod coarse;
pub mod lsq;
pub mod neumann;
pub mod oracle;
pub mod vanilla;

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use faer::{ColRef, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{apply_change_of_variables, assemble_local, build_transition, FluxVariant, LocalBlocks, TraceBasis};
use crate::error::{DdelmError, Result};
use crate::features::{init_layer, FeatureLayer};
use crate::geometry::{build_interface_index, classify_points, partition_domain, DomainPartition, InterfaceIndex, PointSets};
use crate::metrics::ErrorReport;
use crate::problems::{make_problem, ProblemKind, ProblemParams, ProblemSpec};

pub use cg::{CgOptions, CgOutcome};
pub use coarse::CoarseSystem;
pub use lsq::{factorize, LsFactor, DEFAULT_RANK_TOL};
pub use neumann::NeumannSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ddelm")]
    Ddelm,
    #[serde(rename = "ddelm-cs")]
    DdelmCs,
    #[serde(rename = "ddelm-nn")]
    DdelmNn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ddelm => "ddelm",
            Method::DdelmCs => "ddelm-cs",
            Method::DdelmNn => "ddelm-nn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ddelm" => Some(Method::Ddelm),
            "ddelm-cs" => Some(Method::DdelmCs),
            "ddelm-nn" => Some(Method::DdelmNn),
            _ => None,
        }
    }
}

/// Everything that determines a discretization and its solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub problem: String,
    pub params: ProblemParams,
    pub s: usize,
    pub n_grid: usize,
    /// Neurons per subdomain.
    pub m: usize,
    /// Weight scale; `None` selects 32, or 64 for the biharmonic problem.
    pub l: Option<f64>,
    /// Center box enlargement; `None` selects half the subdomain diameter.
    pub r: Option<f64>,
    pub seed: u64,
    pub method: Method,
    pub theta: f64,
    pub flux_variant: FluxVariant,
    pub trace_basis: TraceBasis,
    pub cg: CgOptions,
    pub rank_tol: f64,
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            problem: "poisson_sinpi".into(),
            params: ProblemParams::default(),
            s: 2,
            n_grid: 40,
            m: 256,
            l: None,
            r: None,
            seed: 0,
            method: Method::DdelmNn,
            theta: 0.999,
            flux_variant: FluxVariant::MeanEdge,
            trace_basis: TraceBasis::ChangeOfVariables,
            cg: CgOptions::default(),
            rank_tol: DEFAULT_RANK_TOL,
            workers: 1,
        }
    }
}

impl SolverConfig {
    pub fn resolved_l(&self, kind: ProblemKind) -> f64 {
        self.l.unwrap_or(if kind == ProblemKind::Biharmonic { 64.0 } else { 32.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(DdelmError::InvalidParameter { name: "theta", reason: format!("must lie in [0, 1], got {}", self.theta) });
        }
        if self.m == 0 {
            return Err(DdelmError::InvalidParameter { name: "m", reason: "need at least one neuron".into() });
        }
        if self.workers == 0 {
            return Err(DdelmError::InvalidParameter { name: "workers", reason: "need at least one worker".into() });
        }
        if !(self.cg.rel_tol > 0.0) {
            return Err(DdelmError::InvalidParameter { name: "rel_tol", reason: "must be positive".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub assembly: f64,
    pub factorization: f64,
    /// Coarse and Neumann system setup.
    pub setup: f64,
    pub cg: f64,
    pub reconstruction: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.assembly + self.factorization + self.setup + self.cg + self.reconstruction
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub config: SolverConfig,
    pub coeffs: Vec<Vec<f64>>,
    /// Interface unknowns, Δ block first.
    pub mu: Vec<f64>,
    pub n_delta: usize,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub timings: Timings,
    /// Numerical ranks of the local design matrices.
    pub local_ranks: Vec<usize>,
    pub errors: Option<ErrorReport>,
}

impl SolveReport {
    pub fn mu_delta(&self) -> &[f64] {
        &self.mu[..self.n_delta]
    }

    pub fn mu_pi(&self) -> &[f64] {
        &self.mu[self.n_delta..]
    }
}

pub(crate) fn mv(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let y = a * ColRef::from_slice(x);
    y.iter().copied().collect()
}

pub(crate) fn mtv(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let y = a.transpose() * ColRef::from_slice(x);
    y.iter().copied().collect()
}

/// Per-subdomain products reused by every operator application:
/// `G = K⁺ E_t`, `E = F G` and `H = E_tᵀ K K⁺ E_t`, where `E_t` embeds the
/// trace slots into the rows of `K`.
#[derive(Debug, Clone)]
pub struct LocalOps {
    pub g: Mat<f64>,
    pub e: Mat<f64>,
    pub h: Mat<f64>,
    /// `K⁺ f`.
    pub kf: Vec<f64>,
    /// `F K⁺ f`.
    pub fkf: Vec<f64>,
}

/// Assembled and factored local problems shared by all drivers.
pub struct Discretization {
    pub config: SolverConfig,
    pub problem: ProblemSpec,
    pub partition: DomainPartition,
    pub points: PointSets,
    pub index: InterfaceIndex,
    pub layers: Vec<FeatureLayer>,
    pub blocks: Vec<LocalBlocks>,
    pub factors: Vec<LsFactor>,
    pub local: Vec<LocalOps>,
    pub timings: Timings,
    neumann: OnceLock<NeumannSystem>,
    pool: Arc<rayon::ThreadPool>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("config", &self.config)
            .field("n_mu", &self.index.n_mu())
            .finish_non_exhaustive()
    }
}

fn build_local_ops(b: &LocalBlocks, fac: &LsFactor) -> Result<LocalOps> {
    let off = b.trace_offset();
    let g = fac.pinv_columns(off, b.n_trace);
    let e = &b.flux * &g;
    let h = fac.projector_block(off, b.n_trace);
    let kf = fac.apply_pinv(&b.f)?;
    let fkf = mv(b.flux.as_ref(), &kf);
    Ok(LocalOps { g, e, h, kf, fkf })
}

impl Discretization {
    pub fn build(config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| DdelmError::InvalidParameter { name: "workers", reason: e.to_string() })?;
        let t0 = Instant::now();
        let problem = make_problem(&config.problem, config.params)?;
        let partition = partition_domain(config.s, config.n_grid)?;
        let points = classify_points(&partition);
        let index = build_interface_index(&partition, &points, problem.components())?;
        let l = config.resolved_l(problem.kind);
        let layers = partition
            .subdomains
            .iter()
            .map(|sd| init_layer(config.m, sd, l, config.r.unwrap_or(sd.diam() / 2.0), config.seed))
            .collect::<Result<Vec<_>>>()?;
        let transition = build_transition(config.n_grid)?;
        let blocks = pool.install(|| {
            (0..partition.n_subdomains())
                .into_par_iter()
                .map(|i| {
                    let b = assemble_local(&problem, &layers[i], &points.local[i], &index.local[i], config.flux_variant)?;
                    match config.trace_basis {
                        TraceBasis::Nodal => Ok(b),
                        TraceBasis::ChangeOfVariables => apply_change_of_variables(&b, &index.local[i], &transition),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let assembly = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let (factors, local) = pool.install(|| {
            blocks
                .par_iter()
                .map(|b| {
                    let fac = factorize(b.k.as_ref(), config.rank_tol)?;
                    let ops = build_local_ops(b, &fac)?;
                    Ok((fac, ops))
                })
                .collect::<Result<Vec<_>>>()
        })?
        .into_iter()
        .unzip();
        let factorization = t1.elapsed().as_secs_f64();

        Ok(Self {
            config: config.clone(),
            problem,
            partition,
            points,
            index,
            layers,
            blocks,
            factors,
            local,
            timings: Timings { assembly, factorization, ..Default::default() },
            neumann: OnceLock::new(),
            pool: Arc::new(pool),
        })
    }

    pub fn n_subdomains(&self) -> usize {
        self.blocks.len()
    }

    /// Run `f` per subdomain on the worker pool; results keep subdomain order.
    pub(crate) fn par_map<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let n = self.n_subdomains();
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    /// Flux rows of subdomain `i` read from a global flux vector.
    pub(crate) fn restrict_flux(&self, i: usize, y: &[f64]) -> Vec<f64> {
        self.index.local[i].flux_rows.iter().map(|r| y[r.global_row]).collect()
    }

    pub(crate) fn gather_flux(&self, i: usize, local: &[f64], y: &mut [f64]) {
        for (r, v) in self.index.local[i].flux_rows.iter().zip(local) {
            y[r.global_row] += v;
        }
    }

    /// `A c` for per-subdomain coefficients.
    pub fn apply_flux(&self, coeffs: &[Vec<f64>]) -> Vec<f64> {
        let mut y = vec![0.0; self.index.n_flux_rows()];
        let parts = self.par_map(|i| mv(self.blocks[i].flux.as_ref(), &coeffs[i]));
        for (i, p) in parts.iter().enumerate() {
            self.gather_flux(i, p, &mut y);
        }
        y
    }

    /// `c^i = K⁺(f − B μ)` for every subdomain.
    pub fn reconstruct(&self, mu: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.par_map(|i| {
            let b = &self.blocks[i];
            let mut rhs = b.f.clone();
            let off = b.trace_offset();
            for (k, v) in self.index.restrict(i, mu).into_iter().enumerate() {
                rhs[off + k] += v;
            }
            self.factors[i].apply_pinv(&rhs)
        })
        .into_iter()
        .collect()
    }

    /// Negate the flux rows of one subdomain. Test hook producing a
    /// deliberately inconsistent discretization.
    pub fn corrupt_flux_sign(&mut self, sub: usize) -> Result<()> {
        let b = &mut self.blocks[sub];
        b.flux = Mat::from_fn(b.flux.nrows(), b.flux.ncols(), |i, j| -b.flux[(i, j)]);
        self.local[sub] = build_local_ops(&self.blocks[sub], &self.factors[sub])?;
        Ok(())
    }

    /// The Neumann-to-Dirichlet system, built on first use and cached.
    pub fn neumann(&self) -> Result<&NeumannSystem> {
        if let Some(ns) = self.neumann.get() {
            return Ok(ns);
        }
        let ns = NeumannSystem::build(self)?;
        Ok(self.neumann.get_or_init(|| ns))
    }

    /// Whether the Neumann system has been built.
    pub fn has_neumann(&self) -> bool {
        self.neumann.get().is_some()
    }

    pub fn local_ranks(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rank()).collect()
    }

    fn report(&self, coeffs: Vec<Vec<f64>>, mu: Vec<f64>, cg: Option<CgOutcome>, timings: Timings) -> SolveReport {
        let (iterations, residuals, converged) = match cg {
            Some(o) => (o.iterations, o.residuals, o.converged),
            None => (0, Vec::new(), true),
        };
        SolveReport {
            config: self.config.clone(),
            coeffs,
            mu,
            n_delta: self.index.n_delta(),
            iterations,
            residuals,
            converged,
            timings,
            local_ranks: self.local_ranks(),
            errors: None,
        }
    }
}

fn finish(report: SolveReport) -> Result<SolveReport> {
    if report.converged {
        Ok(report)
    } else {
        Err(DdelmError::NotConverged {
            iterations: report.iterations,
            residual: report.residuals.last().copied().unwrap_or(f64::NAN),
        })
    }
}

/// Solve with the configured method. A non-converged CG run still yields
/// its report through `solve_unchecked`.
pub fn solve(disc: &Discretization) -> Result<SolveReport> {
    finish(solve_unchecked(disc)?)
}

pub fn solve_unchecked(disc: &Discretization) -> Result<SolveReport> {
    solve_with(disc, disc.config.method, disc.config.theta)
}

/// Solve the same discretization with another method or `θ`; the report's
/// configuration echo carries the method actually used.
pub fn solve_with(disc: &Discretization, method: Method, theta: f64) -> Result<SolveReport> {
    let mut report = match method {
        Method::Ddelm => vanilla::ddelm_solve(disc)?,
        Method::DdelmCs => coarse::ddelm_cs_solve(disc, None)?,
        Method::DdelmNn => coarse::ddelm_cs_solve(disc, Some(theta))?,
    };
    report.config.method = method;
    report.config.theta = theta;
    Ok(report)
}

/// Build and solve in one step.
pub fn run(config: &SolverConfig) -> Result<(Discretization, SolveReport)> {
    let disc = Discretization::build(config)?;
    let report = solve_unchecked(&disc)?;
    Ok((disc, report))
}
