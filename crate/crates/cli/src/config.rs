//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use ddelm::assembly::{FluxVariant, TraceBasis};
use ddelm::solvers::{Method, SolverConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
}

/// Everything a run needs; echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub solver: SolverConfig,
    /// Points per side of the error quadrature grid.
    pub eval_grid_n: usize,
    /// Points per side of the finite-difference reference grid.
    pub fd_grid_n: usize,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    pub repeats: usize,
    pub json_out: Option<PathBuf>,
    pub csv_out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            eval_grid_n: ddelm::metrics::DEFAULT_EVAL_GRID,
            fd_grid_n: 257,
            repeats: 1,
            json_out: None,
            csv_out: None,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "problem",
    "alpha",
    "grf_seed",
    "rho_seed",
    "s",
    "n_grid",
    "m",
    "l",
    "r",
    "seed",
    "method",
    "theta",
    "flux_variant",
    "trace_basis",
    "rel_tol",
    "max_iter",
    "rank_tol",
    "workers",
    "eval_grid_n",
    "fd_grid_n",
    "repeats",
    "json_out",
    "csv_out",
];

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.into() }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(key, value, e.to_string()))
}

/// `auto` maps to `None`.
fn auto<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if value == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn path(value: &str) -> Option<PathBuf> {
    if value.is_empty() || value == "none" {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.solver;
        match key {
            "problem" => {
                if !ddelm::problems::PROBLEM_NAMES.contains(&value) {
                    return Err(bad(key, value, format!("expected one of {:?}", ddelm::problems::PROBLEM_NAMES)));
                }
                s.problem = value.into();
            }
            "alpha" => s.params.alpha = num(key, value)?,
            "grf_seed" => s.params.grf_seed = num(key, value)?,
            "rho_seed" => s.params.rho_seed = num(key, value)?,
            "s" => s.s = num(key, value)?,
            "n_grid" => s.n_grid = num(key, value)?,
            "m" => s.m = num(key, value)?,
            "l" => s.l = auto(key, value)?,
            "r" => s.r = auto(key, value)?,
            "seed" => s.seed = num(key, value)?,
            "method" => s.method = Method::parse(value).ok_or_else(|| bad(key, value, "expected ddelm, ddelm-cs or ddelm-nn"))?,
            "theta" => s.theta = num(key, value)?,
            "flux_variant" => {
                s.flux_variant = match value {
                    "pointwise" => FluxVariant::Pointwise,
                    "mean_edge" => FluxVariant::MeanEdge,
                    _ => return Err(bad(key, value, "expected pointwise or mean_edge")),
                }
            }
            "trace_basis" => {
                s.trace_basis = match value {
                    "nodal" => TraceBasis::Nodal,
                    "change_of_variables" => TraceBasis::ChangeOfVariables,
                    _ => return Err(bad(key, value, "expected nodal or change_of_variables")),
                }
            }
            "rel_tol" => s.cg.rel_tol = num(key, value)?,
            "max_iter" => s.cg.max_iter = auto(key, value)?,
            "rank_tol" => s.rank_tol = num(key, value)?,
            "workers" => s.workers = num(key, value)?,
            "eval_grid_n" => self.eval_grid_n = num(key, value)?,
            "fd_grid_n" => self.fd_grid_n = num(key, value)?,
            "repeats" => self.repeats = num(key, value)?,
            "json_out" => self.json_out = path(value),
            "csv_out" => self.csv_out = path(value),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: n + 1, text: raw.into() })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, file: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io { path: file.into(), source })?;
        self.apply_text(&text)
    }

    /// Apply `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, sets: &[S]) -> Result<(), ConfigError> {
        for (n, kv) in sets.iter().enumerate() {
            let kv = kv.as_ref();
            let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax { line: n + 1, text: kv.into() })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.solver.validate().map_err(|e| bad("solver", "", e.to_string()))?;
        if self.eval_grid_n < ddelm::metrics::MIN_EVAL_GRID {
            return Err(bad(
                "eval_grid_n",
                &self.eval_grid_n.to_string(),
                format!("must be at least {}", ddelm::metrics::MIN_EVAL_GRID),
            ));
        }
        if self.repeats == 0 {
            return Err(bad("repeats", "0", "need at least one run"));
        }
        Ok(())
    }

    /// The tiny oracle instance: 2×2 subdomains, 64 neurons, 10×10 grids.
    pub fn tiny() -> Self {
        let mut c = Self::default();
        c.solver.s = 2;
        c.solver.m = 64;
        c.solver.n_grid = 10;
        c.solver.l = Some(4.0);
        c.solver.cg.rel_tol = 1e-12;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_accepted() {
        let samples = [
            "poisson_grf", "16", "3", "4", "4", "20", "128", "auto", "0.2", "7", "ddelm-cs", "0.5", "pointwise", "nodal",
            "1e-8", "500", "1e-12", "2", "129", "65", "3", "out.json", "out.csv",
        ];
        let mut c = RunConfig::default();
        for (k, v) in KEYS.iter().zip(samples) {
            c.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert_eq!(c.solver.method, Method::DdelmCs);
        assert_eq!(c.solver.cg.max_iter, Some(500));
        assert_eq!(c.solver.r, Some(0.2));
        assert_eq!(c.csv_out.as_deref(), Some(Path::new("out.csv")));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let mut c = RunConfig::default();
        c.apply_text("# header\n\ns = 4  # four per side\ntheta=1\n").unwrap();
        assert_eq!(c.solver.s, 4);
        assert_eq!(c.solver.theta, 1.0);
    }

    #[test]
    fn errors_name_the_problem() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("s", "two"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.apply_text("s 4"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(c.set("method", "fetidp").is_err());
        c.set("theta", "2").unwrap();
        assert!(c.validate().is_err());
    }
}
