//! Relative L² and H¹ errors by composite trapezoidal quadrature.

mod fd;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fd::{fd_reference, FdField};

use crate::error::{DdelmError, Result};
use crate::field::Field;

pub const DEFAULT_EVAL_GRID: usize = 257;
pub const MIN_EVAL_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Exact,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2: f64,
    pub h1: f64,
    pub eval_grid_n: usize,
    pub reference: ReferenceKind,
}

/// `(∫u², ∫|∇u|²)` by the trapezoidal rule on an `n × n` node grid.
pub fn squared_norms(u: &dyn Field, n: usize) -> (f64, f64) {
    let h = 1.0 / (n - 1) as f64;
    let w = |k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..n {
                let (v, g) = u.value_grad([i as f64 * h, j as f64 * h]);
                a += w(i) * v * v;
                b += w(i) * (g[0] * g[0] + g[1] * g[1]);
            }
            (w(j) * a, w(j) * b)
        })
        .collect();
    let (a, b) = rows.iter().fold((0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.1));
    (a * h * h, b * h * h)
}

/// Errors of `u_star` relative to `reference`:
/// `‖u − u*‖/‖u‖` in L² and in H¹ with `‖v‖²_{H¹} = ‖v‖² + ‖∇v‖²`.
pub fn relative_errors(u_star: &dyn Field, reference: &dyn Field, kind: ReferenceKind, eval_grid_n: usize) -> Result<ErrorReport> {
    if eval_grid_n < MIN_EVAL_GRID {
        return Err(DdelmError::InvalidParameter {
            name: "eval_grid_n",
            reason: format!("needs at least {MIN_EVAL_GRID} points per direction, got {eval_grid_n}"),
        });
    }
    let diff = crate::field::Difference(u_star, reference);
    let (e0, e1) = squared_norms(&diff, eval_grid_n);
    let (r0, r1) = squared_norms(reference, eval_grid_n);
    if r0 == 0.0 {
        return Err(DdelmError::Reference("reference field vanishes identically".into()));
    }
    Ok(ErrorReport {
        l2: (e0 / r0).sqrt(),
        h1: ((e0 + e1) / (r0 + r1)).sqrt(),
        eval_grid_n,
        reference: kind,
    })
}
