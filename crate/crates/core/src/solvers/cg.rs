//! Plain Hestenes–Stiefel conjugate gradients.

use serde::{Deserialize, Serialize};

use crate::error::{DdelmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// `None` selects twenty times the unknown count.
    pub max_iter: Option<usize>,
    /// Curvature `⟨Op p, p⟩ < −neg_tol·‖p‖²` aborts.
    pub neg_tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9, max_iter: None, neg_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖r_k‖/‖b‖`, starting with `k = 0`.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `Op x = b` from `x = 0`. Returns the final iterate even when
/// `max_iter` is exhausted; callers decide via `converged`.
pub fn cg<F>(mut op: F, b: &[f64], opts: &CgOptions) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let max_iter = opts.max_iter.unwrap_or(20 * n.max(1));
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, residuals: vec![0.0], converged: true });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut residuals = vec![1.0];
    let mut k = 0;
    while k < max_iter {
        let ap = op(&p)?;
        if ap.len() != n {
            return Err(DdelmError::Dimension { context: "cg operator output", expected: n, actual: ap.len() });
        }
        let curv = dot(&p, &ap);
        let pp = dot(&p, &p);
        if curv < -opts.neg_tol * pp {
            return Err(DdelmError::NegativeCurvature { iteration: k, curvature: curv / pp });
        }
        if curv <= 0.0 {
            // p lies in the operator's null space; nothing further is reachable
            break;
        }
        let alpha = rr / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        k += 1;
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        residuals.push(rel);
        if rel < opts.rel_tol {
            return Ok(CgOutcome { x, iterations: k, residuals, converged: true });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Ok(CgOutcome { x, iterations: k, residuals, converged: false })
}
