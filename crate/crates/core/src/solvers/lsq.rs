//! Minimum-norm least-squares factorization of tall local matrices.

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, MatRef, Par};

use crate::error::{DdelmError, Result};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Column-pivoted QR `K P = Q R` truncated at numerical rank `r`.
///
/// When `r` is below the column count the retained rows `[R11 R12]` are
/// further factored as `Uᵀ Zᵀ`, so that `K⁺ = P Z U⁻ᵀ Q_rᵀ` is the
/// minimum-norm pseudo-inverse of the truncated matrix.
#[derive(Debug, Clone)]
pub struct LsFactor {
    nrows: usize,
    ncols: usize,
    rank: usize,
    rank_tol: f64,
    /// `Q_r`, orthonormal basis of the numerical range.
    q: Mat<f64>,
    /// Upper triangular `r × r`: `R11` if `z` is absent, else `U`.
    u: Mat<f64>,
    z: Option<Mat<f64>>,
    /// Column `j` of `K P` is column `perm[j]` of `K`.
    perm: Vec<usize>,
}

pub fn factorize(k: MatRef<'_, f64>, rank_tol: f64) -> Result<LsFactor> {
    let (n, m) = (k.nrows(), k.ncols());
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(DdelmError::InvalidParameter { name: "rank_tol", reason: format!("must lie in (0, 1), got {rank_tol}") });
    }
    if n < m {
        return Err(DdelmError::Dimension { context: "factorize expects a tall matrix", expected: m, actual: n });
    }
    if m == 0 {
        return Ok(LsFactor {
            nrows: n,
            ncols: 0,
            rank: 0,
            rank_tol,
            q: Mat::zeros(n, 0),
            u: Mat::zeros(0, 0),
            z: None,
            perm: Vec::new(),
        });
    }
    let qr = k.col_piv_qr();
    let r_full = qr.thin_R();
    let r00 = r_full[(0, 0)].abs();
    let rank = if r00 == 0.0 { 0 } else { (0..m).take_while(|&j| r_full[(j, j)].abs() > rank_tol * r00).count() };
    let perm = qr.P().arrays().0.to_vec();
    let q_full = qr.compute_thin_Q();
    let q = q_full.as_ref().subcols(0, rank).to_owned();
    let (u, z) = if rank == m {
        (r_full.submatrix(0, 0, m, m).to_owned(), None)
    } else {
        // [R11 R12]ᵀ = Z U
        let top_t = r_full.subrows(0, rank).transpose().to_owned();
        let qr2 = top_t.qr();
        let u = qr2.thin_R().to_owned();
        let z = qr2.compute_thin_Q();
        (u, Some(z))
    };
    Ok(LsFactor { nrows: n, ncols: m, rank, rank_tol, q, u, z, perm })
}

impl LsFactor {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.ncols
    }

    /// Orthonormal basis `Q_r` of the numerical range.
    pub fn range_basis(&self) -> MatRef<'_, f64> {
        self.q.as_ref()
    }

    fn check(&self, expected: usize, actual: usize, context: &'static str) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(DdelmError::Dimension { context, expected, actual })
        }
    }

    /// `K⁺ Y` for `r`-row coefficients `Y = Q_rᵀ V`.
    fn from_range_coords(&self, mut y: Mat<f64>) -> Mat<f64> {
        let w = match &self.z {
            None => {
                solve_upper_triangular_in_place(self.u.as_ref(), y.as_mut(), Par::Seq);
                y
            }
            Some(z) => {
                solve_lower_triangular_in_place(self.u.as_ref().transpose(), y.as_mut(), Par::Seq);
                z * &y
            }
        };
        let mut out = Mat::zeros(self.ncols, w.ncols());
        for c in 0..w.ncols() {
            for (j, &p) in self.perm.iter().enumerate() {
                out[(p, c)] = w[(j, c)];
            }
        }
        out
    }

    /// `K⁺ V` for a block of right-hand sides.
    pub fn apply_pinv_mat(&self, v: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check(self.nrows, v.nrows(), "apply_pinv right-hand side")?;
        let y = self.q.transpose() * v;
        Ok(self.from_range_coords(y))
    }

    pub fn apply_pinv(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.apply_pinv_mat(MatRef::from_column_major_slice(v, v.len(), 1))?;
        Ok(m.col(0).iter().copied().collect())
    }

    /// `(K⁺)ᵀ W` for a block of vectors of column length.
    pub fn apply_pinv_transpose_mat(&self, w: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check(self.ncols, w.nrows(), "apply_pinv_transpose argument")?;
        let mut wp = Mat::zeros(self.ncols, w.ncols());
        for c in 0..w.ncols() {
            for (j, &p) in self.perm.iter().enumerate() {
                wp[(j, c)] = w[(p, c)];
            }
        }
        let mut y = match &self.z {
            None => wp,
            Some(z) => z.transpose() * &wp,
        };
        match &self.z {
            None => solve_lower_triangular_in_place(self.u.as_ref().transpose(), y.as_mut(), Par::Seq),
            Some(_) => solve_upper_triangular_in_place(self.u.as_ref(), y.as_mut(), Par::Seq),
        }
        Ok(&self.q * &y)
    }

    pub fn apply_pinv_transpose(&self, w: &[f64]) -> Result<Vec<f64>> {
        let m = self.apply_pinv_transpose_mat(MatRef::from_column_major_slice(w, w.len(), 1))?;
        Ok(m.col(0).iter().copied().collect())
    }

    /// `K K⁺ v = Q_r Q_rᵀ v`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(self.nrows, v.len(), "project argument")?;
        let vm = MatRef::from_column_major_slice(v, v.len(), 1);
        let p = &self.q * (self.q.transpose() * vm);
        Ok(p.col(0).iter().copied().collect())
    }

    /// Columns `rows` of `K⁺`, i.e. `K⁺ [e_j]` for `j` in the row range.
    pub fn pinv_columns(&self, start: usize, len: usize) -> Mat<f64> {
        let y = self.q.as_ref().subrows(start, len).transpose().to_owned();
        self.from_range_coords(y)
    }

    /// Block `rows × rows` of the projector `K K⁺`.
    pub fn projector_block(&self, start: usize, len: usize) -> Mat<f64> {
        let qs = self.q.as_ref().subrows(start, len);
        qs * qs.transpose()
    }
}
