//! Second-order finite-difference reference for the Poisson problems.

use crate::error::{DdelmError, Result};
use crate::field::Field;
use crate::problems::{eval_rho, InteriorOperator, ProblemKind, ProblemSpec};
use crate::solvers::cg::{cg, CgOptions};

/// Nodal values on an `n × n` grid over the unit square, row-major in `y`,
/// with fourth-order nodal gradients. Off-node queries interpolate
/// bilinearly.
#[derive(Debug, Clone)]
pub struct FdField {
    pub n: usize,
    pub values: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub iterations: usize,
}

/// Fourth-order first derivative along a line of `n ≥ 5` samples.
fn diff4(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let mut d = vec![0.0; n];
    let s = 12.0 * h;
    for k in 0..n {
        d[k] = if k == 0 {
            (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]) / s
        } else if k == 1 {
            (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]) / s
        } else if k == n - 2 {
            (3.0 * u[n - 1] + 10.0 * u[n - 2] - 18.0 * u[n - 3] + 6.0 * u[n - 4] - u[n - 5]) / s
        } else if k == n - 1 {
            (25.0 * u[n - 1] - 48.0 * u[n - 2] + 36.0 * u[n - 3] - 16.0 * u[n - 4] + 3.0 * u[n - 5]) / s
        } else {
            (u[k - 2] - 8.0 * u[k - 1] + 8.0 * u[k + 1] - u[k + 2]) / s
        };
    }
    d
}

/// Solve `−∇·(ρ∇u) = f` (`ρ ≡ 1` for Poisson) with the 5-point conservative
/// stencil, `ρ` sampled at edge midpoints. CG runs to relative residual 1e-12.
pub fn fd_reference(problem: &ProblemSpec, grid_n: usize) -> Result<FdField> {
    if problem.kind == ProblemKind::Biharmonic {
        return Err(DdelmError::Reference("finite-difference reference covers the Poisson problems only".into()));
    }
    if grid_n < 5 {
        return Err(DdelmError::InvalidParameter { name: "grid_n", reason: format!("needs at least 5 points, got {grid_n}") });
    }
    let n = grid_n;
    let h = 1.0 / (n - 1) as f64;
    let rho = |x: [f64; 2]| match &problem.interior {
        InteriorOperator::Conservative(g) => eval_rho(g, x).0,
        _ => 1.0,
    };
    let at = |i: usize, j: usize| [i as f64 * h, j as f64 * h];
    let ni = n - 2;
    let id = |i: usize, j: usize| (j - 1) * ni + (i - 1);
    // east and north face coefficients for every node
    let mut ce = vec![0.0; n * n];
    let mut cn = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            if i + 1 < n {
                ce[j * n + i] = rho([(i as f64 + 0.5) * h, j as f64 * h]);
            }
            if j + 1 < n {
                cn[j * n + i] = rho([i as f64 * h, (j as f64 + 0.5) * h]);
            }
        }
    }
    let mut boundary = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                boundary[j * n + i] = problem.boundary_value(0, at(i, j));
            }
        }
    }
    let is_b = |i: usize, j: usize| i == 0 || j == 0 || i == n - 1 || j == n - 1;
    let mut rhs = vec![0.0; ni * ni];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let mut r = h * h * problem.forcing_at(at(i, j));
            for (c, (a, b)) in [
                (ce[j * n + i], (i + 1, j)),
                (ce[j * n + i - 1], (i - 1, j)),
                (cn[j * n + i], (i, j + 1)),
                (cn[(j - 1) * n + i], (i, j - 1)),
            ] {
                if is_b(a, b) {
                    r += c * boundary[b * n + a];
                }
            }
            rhs[id(i, j)] = r;
        }
    }
    let op = |v: &[f64]| -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let u = v[id(i, j)];
                let mut acc = 0.0;
                for (c, (a, b)) in [
                    (ce[j * n + i], (i + 1, j)),
                    (ce[j * n + i - 1], (i - 1, j)),
                    (cn[j * n + i], (i, j + 1)),
                    (cn[(j - 1) * n + i], (i, j - 1)),
                ] {
                    let nb = if is_b(a, b) { 0.0 } else { v[id(a, b)] };
                    acc += c * (u - nb);
                }
                out[id(i, j)] = acc;
            }
        }
        Ok(out)
    };
    let opts = CgOptions { rel_tol: 1e-12, max_iter: Some(50 * ni * ni.max(1)), neg_tol: 0.0 };
    let sol = cg(op, &rhs, &opts)?;
    if !sol.converged {
        return Err(DdelmError::NotConverged {
            iterations: sol.iterations,
            residual: sol.residuals.last().copied().unwrap_or(f64::NAN),
        });
    }
    let mut values = boundary;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            values[j * n + i] = sol.x[id(i, j)];
        }
    }
    let mut grad = vec![[0.0; 2]; n * n];
    for j in 0..n {
        let d = diff4(&values[j * n..(j + 1) * n], h);
        for i in 0..n {
            grad[j * n + i][0] = d[i];
        }
    }
    for i in 0..n {
        let col: Vec<f64> = (0..n).map(|j| values[j * n + i]).collect();
        let d = diff4(&col, h);
        for j in 0..n {
            grad[j * n + i][1] = d[j];
        }
    }
    Ok(FdField { n, values, grad, iterations: sol.iterations })
}

impl FdField {
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }
}

impl Field for FdField {
    fn value_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let m = (self.n - 1) as f64;
        let (fx, fy) = ((x[0].clamp(0.0, 1.0)) * m, (x[1].clamp(0.0, 1.0)) * m);
        let i = (fx.floor() as usize).min(self.n - 2);
        let j = (fy.floor() as usize).min(self.n - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let w = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
        let k = [j * self.n + i, j * self.n + i + 1, (j + 1) * self.n + i, (j + 1) * self.n + i + 1];
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for q in 0..4 {
            v += w[q] * self.values[k[q]];
            g[0] += w[q] * self.grad[k[q]][0];
            g[1] += w[q] * self.grad[k[q]][1];
        }
        (v, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, ProblemParams};

    #[test]
    fn fourth_order_difference_is_exact_on_quartics() {
        let h = 0.1;
        let u: Vec<f64> = (0..9).map(|k| (k as f64 * h).powi(4) - 2.0 * (k as f64 * h)).collect();
        let d = diff4(&u, h);
        for (k, v) in d.iter().enumerate() {
            let x = k as f64 * h;
            assert!((v - (4.0 * x.powi(3) - 2.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let mut p = make_problem("poisson_grf", ProblemParams::default()).unwrap();
        p.forcing = crate::problems::Forcing::Constant(0.0);
        let u = fd_reference(&p, 17).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn biharmonic_is_rejected() {
        let p = make_problem("biharmonic_sinpi", ProblemParams::default()).unwrap();
        assert!(fd_reference(&p, 33).is_err());
    }
}
