//! Driver-versus-oracle comparison on tiny instances.

use nalgebra::DMatrix;
use serde::Serialize;

use super::coarse::ReducedCs;
use super::oracle::dense_oracle_solve;
use super::vanilla::ddelm_reduced_apply;
use super::{solve_with, Discretization, Method};
use crate::error::Result;
use crate::field::ElmField;
use crate::metrics::{relative_errors, ReferenceKind, MIN_EVAL_GRID};

pub const ORACLE_PASS_TOL: f64 = 1e-6;

/// Location of the largest operator discrepancy.
#[derive(Debug, Clone, Serialize)]
pub struct Discrepancy {
    pub row: usize,
    pub col: usize,
    pub driver: f64,
    pub oracle: f64,
    /// Interface point of the row unknown and the subdomains sharing it.
    pub coord: [f64; 2],
    pub subdomains: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleDiff {
    pub method: Method,
    pub theta: f64,
    pub mu_rel: f64,
    pub field_l2: f64,
    /// `max|Op_driver − Op_oracle| / max|Op_oracle|`.
    pub operator_rel: f64,
    pub operator_abs: f64,
    pub worst: Option<Discrepancy>,
    pub iterations: usize,
    pub passed: bool,
}

/// The driver's matrix-free reduced operator applied to every unit vector.
pub fn reduced_operator_dense(disc: &Discretization, method: Method, theta: f64) -> Result<DMatrix<f64>> {
    let apply: Box<dyn Fn(&[f64]) -> Vec<f64> + '_> = match method {
        Method::Ddelm => Box::new(move |v: &[f64]| ddelm_reduced_apply(disc, v)),
        Method::DdelmCs | Method::DdelmNn => {
            let th = if method == Method::DdelmCs { None } else { Some(theta) };
            let red = ReducedCs::new(disc, th)?;
            Box::new(move |v: &[f64]| red.apply(v))
        }
    };
    let n = if method == Method::Ddelm { disc.index.n_mu() } else { disc.index.n_delta() };
    let mut op = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            op[(i, j)] = v;
        }
    }
    Ok(op)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Solve with the driver on `driver` and with the dense oracle on `reference`.
/// The two discretizations normally coincide; passing a perturbed `driver`
/// is the negative control.
pub fn oracle_compare(driver: &Discretization, reference: &Discretization, method: Method, theta: f64) -> Result<OracleDiff> {
    let rep = solve_with(driver, method, theta)?;
    let ora = dense_oracle_solve(reference, method, theta)?;
    let mu_rel = rel_diff(&rep.mu, &ora.report.mu);
    let u = ElmField::new(&driver.partition, &driver.layers, &rep.coeffs)?;
    let v = ElmField::new(&reference.partition, &reference.layers, &ora.report.coeffs)?;
    let field_l2 = relative_errors(&u, &v, ReferenceKind::Exact, MIN_EVAL_GRID + 1)?.l2;

    let op = reduced_operator_dense(driver, method, theta)?;
    let scale = ora.operator.amax();
    let mut worst = None;
    let mut operator_abs = 0.0;
    for j in 0..op.ncols() {
        for i in 0..op.nrows() {
            let d = (op[(i, j)] - ora.operator[(i, j)]).abs();
            if d > operator_abs || worst.is_none() {
                operator_abs = d;
                let pt = &driver.index.points[i / driver.index.components];
                worst = Some(Discrepancy {
                    row: i,
                    col: j,
                    driver: op[(i, j)],
                    oracle: ora.operator[(i, j)],
                    coord: pt.coord,
                    subdomains: pt.subdomains.clone(),
                });
            }
        }
    }
    let operator_rel = if scale > 0.0 { operator_abs / scale } else { operator_abs };
    let passed = mu_rel < ORACLE_PASS_TOL && field_l2 < ORACLE_PASS_TOL && operator_rel < ORACLE_PASS_TOL;
    Ok(OracleDiff { method, theta, mu_rel, field_l2, operator_rel, operator_abs, worst, iterations: rep.iterations, passed })
}
