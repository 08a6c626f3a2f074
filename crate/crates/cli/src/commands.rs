//! Subcommand implementations, independent of argument parsing.

use ddelm::assembly::{FluxVariant, TraceBasis};
use ddelm::field::ElmField;
use ddelm::metrics::{fd_reference, relative_errors, ErrorReport, FdField, ReferenceKind};
use ddelm::problems::sample_grf;
use ddelm::solvers::check::{oracle_compare, OracleDiff};
use ddelm::solvers::{solve_with, Discretization, Method, SolveReport};
use ddelm::DdelmError;
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{RunRecord, RunReport};
use crate::CliError;

/// Errors against the exact solution when known, otherwise against a
/// finite-difference reference computed once per problem.
pub struct Evaluator<'a> {
    cfg: &'a RunConfig,
    fd: Option<(String, FdField)>,
}

impl<'a> Evaluator<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Self { cfg, fd: None }
    }

    pub fn errors(&mut self, disc: &Discretization, rep: &SolveReport) -> Result<ErrorReport, DdelmError> {
        let u = ElmField::new(&disc.partition, &disc.layers, &rep.coeffs)?;
        if let Some(exact) = disc.problem.exact.as_ref() {
            return relative_errors(&u, exact, ReferenceKind::Exact, self.cfg.eval_grid_n);
        }
        let key = format!("{:?}", (&disc.problem.name, disc.problem.params));
        if self.fd.as_ref().map(|(k, _)| k != &key).unwrap_or(true) {
            self.fd = Some((key, fd_reference(&disc.problem, self.cfg.fd_grid_n)?));
        }
        let fd = &self.fd.as_ref().expect("just filled").1;
        relative_errors(&u, fd, ReferenceKind::FiniteDifference, self.cfg.eval_grid_n)
    }
}

/// Solve and record; solver aborts become failed records, anything else
/// propagates.
fn record(disc: &Discretization, method: Method, theta: f64, eval: &mut Evaluator) -> Result<RunRecord, CliError> {
    match solve_with(disc, method, theta) {
        Ok(rep) => {
            let errors = eval.errors(disc, &rep)?;
            Ok(RunRecord::from_report(&rep, Some(errors)))
        }
        Err(e @ DdelmError::NegativeCurvature { .. }) | Err(e @ DdelmError::CoarseFactorization(_)) => {
            Ok(RunRecord::failed(&disc.config, method, theta, e.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

/// `solve`: one run per repeat with consecutive seeds.
pub fn solve(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let mut eval = Evaluator::new(cfg);
    let mut runs = Vec::with_capacity(cfg.repeats);
    for k in 0..cfg.repeats {
        let mut sc = cfg.solver.clone();
        sc.seed = cfg.solver.seed + k as u64;
        let disc = Discretization::build(&sc)?;
        runs.push(record(&disc, sc.method, sc.theta, &mut eval)?);
    }
    Ok(RunReport { command: "solve".into(), config: cfg.clone(), runs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Four component combinations, each under CS and NN (θ = 1).
    Table1,
    /// NN over θ ∈ {0, .5, .9, .99, .999, .9999, 1}.
    Table2,
    /// All three methods on the configured problem.
    Methods,
    /// All three methods on a fixed problem.
    MethodsOn(&'static str),
}

pub const TABLE2_THETAS: [f64; 7] = [0.0, 0.5, 0.9, 0.99, 0.999, 0.9999, 1.0];

pub const TABLE1_COMPONENTS: [(FluxVariant, TraceBasis); 4] = [
    (FluxVariant::Pointwise, TraceBasis::Nodal),
    (FluxVariant::Pointwise, TraceBasis::ChangeOfVariables),
    (FluxVariant::MeanEdge, TraceBasis::Nodal),
    (FluxVariant::MeanEdge, TraceBasis::ChangeOfVariables),
];

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "table1" => Preset::Table1,
            "table2" => Preset::Table2,
            "methods" => Preset::Methods,
            "table3" => Preset::MethodsOn("poisson_sin2pi_exp"),
            "table4" => Preset::MethodsOn("poisson_grf"),
            "table5" => Preset::MethodsOn("varcoef_poisson"),
            "table6" => Preset::MethodsOn("biharmonic_sinpi"),
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 7] = ["table1", "table2", "methods", "table3", "table4", "table5", "table6"];
}

/// `ablation <preset>`: one discretization per component combination,
/// reused across methods and `θ`.
pub fn ablation(cfg: &RunConfig, preset: Preset) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let mut base = cfg.solver.clone();
    if let Preset::MethodsOn(p) = preset {
        base.problem = p.into();
    }
    let groups: Vec<((FluxVariant, TraceBasis), Vec<(Method, f64)>)> = match preset {
        Preset::Table1 => TABLE1_COMPONENTS
            .iter()
            .map(|&c| (c, vec![(Method::DdelmCs, 0.0), (Method::DdelmNn, 1.0)]))
            .collect(),
        Preset::Table2 => vec![(
            (base.flux_variant, base.trace_basis),
            TABLE2_THETAS.iter().map(|&t| (Method::DdelmNn, t)).collect(),
        )],
        Preset::Methods | Preset::MethodsOn(_) => vec![(
            (base.flux_variant, base.trace_basis),
            vec![(Method::Ddelm, 0.0), (Method::DdelmCs, 0.0), (Method::DdelmNn, base.theta)],
        )],
    };
    let mut eval = Evaluator::new(cfg);
    let mut runs = Vec::new();
    for ((fv, tb), cases) in groups {
        for k in 0..cfg.repeats {
            let mut sc = base.clone();
            sc.flux_variant = fv;
            sc.trace_basis = tb;
            sc.seed = base.seed + k as u64;
            let disc = Discretization::build(&sc)?;
            for &(method, theta) in &cases {
                runs.push(record(&disc, method, theta, &mut eval)?);
            }
        }
    }
    let mut echo = cfg.clone();
    echo.solver.problem = base.problem;
    Ok(RunReport { command: format!("ablation {preset:?}"), config: echo, runs })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub config: RunConfig,
    pub corrupted_subdomain: Option<usize>,
    pub cases: Vec<OracleDiff>,
    pub passed: bool,
}

pub const ORACLE_CASES: [(Method, f64); 4] =
    [(Method::Ddelm, 0.0), (Method::DdelmCs, 0.0), (Method::DdelmNn, 0.0), (Method::DdelmNn, 1.0)];

/// `oracle-check`: driver against the dense oracle for every method. With
/// `corrupt`, the driver sees negated flux rows on that subdomain while the
/// oracle keeps the true ones.
pub fn oracle_check(cfg: &RunConfig, corrupt: Option<usize>) -> Result<OracleReport, CliError> {
    cfg.validate()?;
    let reference = Discretization::build(&cfg.solver)?;
    let corrupted = match corrupt {
        Some(sub) => {
            if sub >= reference.n_subdomains() {
                return Err(CliError::Config(crate::config::ConfigError::BadValue {
                    key: "corrupt-flux".into(),
                    value: sub.to_string(),
                    reason: format!("only {} subdomains", reference.n_subdomains()),
                }));
            }
            let mut d = Discretization::build(&cfg.solver)?;
            d.corrupt_flux_sign(sub)?;
            Some(d)
        }
        None => None,
    };
    let driver = corrupted.as_ref().unwrap_or(&reference);
    let mut cases = Vec::new();
    for (method, theta) in ORACLE_CASES {
        cases.push(oracle_compare(driver, &reference, method, theta)?);
    }
    let passed = cases.iter().all(|c| c.passed);
    Ok(OracleReport { config: cfg.clone(), corrupted_subdomain: corrupt, cases, passed })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrfStats {
    pub alpha: f64,
    pub seeds: usize,
    pub points: usize,
    /// `α⁴/2`.
    pub target: f64,
    /// Per-point sample variance across seeds, averaged over the points.
    pub variance: f64,
    pub rel_error: f64,
    pub min_point_variance: f64,
    pub max_point_variance: f64,
    pub passed: bool,
}

pub const GRF_STATS_TOL: f64 = 0.05;

/// `grf-stats`: sample variance of the random field over seeds `0..seeds`
/// at a `side × side` grid of interior points.
pub fn grf_stats(alpha: f64, seeds: usize, side: usize) -> Result<GrfStats, CliError> {
    if seeds < 2 || side == 0 {
        return Err(CliError::Config(crate::config::ConfigError::BadValue {
            key: "seeds/points".into(),
            value: format!("{seeds}/{side}"),
            reason: "need at least two seeds and one point".into(),
        }));
    }
    let pts: Vec<[f64; 2]> = (0..side * side)
        .map(|k| [((k % side) as f64 + 0.5) / side as f64, ((k / side) as f64 + 0.5) / side as f64])
        .collect();
    let mut sum = vec![0.0; pts.len()];
    let mut sq = vec![0.0; pts.len()];
    for seed in 0..seeds {
        let g = sample_grf(alpha, seed as u64)?;
        for (k, &p) in pts.iter().enumerate() {
            let v = g.eval(p);
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    let n = seeds as f64;
    let var: Vec<f64> = sum.iter().zip(&sq).map(|(s, q)| (q - s * s / n) / (n - 1.0)).collect();
    let variance = var.iter().sum::<f64>() / var.len() as f64;
    let target = alpha.powi(4) / 2.0;
    let rel_error = (variance - target).abs() / target;
    Ok(GrfStats {
        alpha,
        seeds,
        points: pts.len(),
        target,
        variance,
        rel_error,
        min_point_variance: var.iter().copied().fold(f64::INFINITY, f64::min),
        max_point_variance: var.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        passed: rel_error < GRF_STATS_TOL,
    })
}
