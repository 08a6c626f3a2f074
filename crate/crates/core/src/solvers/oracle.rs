//! Dense reference path: every block matrix is formed explicitly and every
//! pseudo-inverse comes from an SVD, independent of the QR machinery.

use nalgebra::{DMatrix, DVector};

use super::{Discretization, Method, SolveReport, Timings};
use crate::error::{DdelmError, Result};

pub const ORACLE_UNKNOWN_LIMIT: usize = 3000;

fn to_na(m: &faer::Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// SVD pseudo-inverse with singular values below `tol·σ_max` discarded.
pub fn svd_pinv(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(tol * smax).expect("both factors were computed")
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (n, m) = blocks.iter().fold((0, 0), |(a, b), x| (a + x.nrows(), b + x.ncols()));
    let mut out = DMatrix::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// Explicit global blocks of the coupled system `[K B; A 0]`.
pub struct DenseBlocks {
    pub k: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub f: DVector<f64>,
    pub k_pinv: DMatrix<f64>,
    pub row_offsets: Vec<usize>,
    pub col_offsets: Vec<usize>,
}

pub fn dense_blocks(disc: &Discretization) -> DenseBlocks {
    let idx = &disc.index;
    let ks: Vec<DMatrix<f64>> = disc.blocks.iter().map(|b| to_na(&b.k)).collect();
    let pinvs: Vec<DMatrix<f64>> = ks.iter().map(|k| svd_pinv(k, disc.config.rank_tol)).collect();
    let k = block_diag(&ks);
    let k_pinv = block_diag(&pinvs);
    let mut row_offsets = vec![0];
    let mut col_offsets = vec![0];
    for b in &disc.blocks {
        row_offsets.push(row_offsets.last().unwrap() + b.n_rows());
        col_offsets.push(col_offsets.last().unwrap() + b.n_cols());
    }
    let mut b = DMatrix::zeros(k.nrows(), idx.n_mu());
    let mut a = DMatrix::zeros(idx.n_flux_rows(), k.ncols());
    let mut f = DVector::zeros(k.nrows());
    for (i, blk) in disc.blocks.iter().enumerate() {
        let off = row_offsets[i] + blk.trace_offset();
        for (kk, &g) in idx.local[i].trace_map.iter().enumerate() {
            b[(off + kk, g)] = -1.0;
        }
        for (r, row) in idx.local[i].flux_rows.iter().enumerate() {
            for j in 0..blk.n_cols() {
                a[(row.global_row, col_offsets[i] + j)] += blk.flux[(r, j)];
            }
        }
        for (r, v) in blk.f.iter().enumerate() {
            f[row_offsets[i] + r] = *v;
        }
    }
    DenseBlocks { k, b, a, f, k_pinv, row_offsets, col_offsets }
}

/// Dense solution together with the explicitly formed reduced operator.
pub struct OracleSolution {
    pub report: SolveReport,
    /// Reduced operator on the CG unknowns (all of `μ`, or `μ_Δ`).
    pub operator: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub p: Option<DMatrix<f64>>,
    pub s_pi: Option<DMatrix<f64>>,
    pub ktilde: Option<DMatrix<f64>>,
}

/// Explicit `P = Ā K̄⁺ B̄` on the Δ interface.
pub fn dense_p(disc: &Discretization) -> Result<DMatrix<f64>> {
    let ns = super::neumann::NeumannSystem::build(disc)?;
    let nd = disc.index.n_delta();
    let mut p = DMatrix::zeros(nd, nd);
    for (i, l) in ns.local.iter().enumerate() {
        let kbar = to_na(&l.kbar);
        let kp = svd_pinv(&kbar, disc.config.rank_tol);
        let off = kbar.nrows() - l.flux_slots.len();
        let iface = &disc.index.local[i];
        let pts = &disc.points.local[i];
        let delta_x: Vec<[f64; 2]> =
            (0..iface.n_points()).filter(|&k| !iface.is_cross[k]).map(|k| pts.interface[k]).collect();
        let mut cd_rows = Vec::new();
        for op in disc.problem.continuity_ops() {
            cd_rows.push(to_na(&disc.layers[i].eval_operator(&delta_x, &op)?));
        }
        let mut cd = DMatrix::zeros(0, kbar.ncols());
        for c in &cd_rows {
            cd = vstack(&cd, c);
        }
        // B̄ = −R_f: column g of B̄ has −1 at the flux datum row
        let local = &cd * &kp;
        for (r, &gf) in l.flux_slots.iter().enumerate() {
            for (t, &gt) in l.trace_slots.iter().enumerate() {
                p[(gt, gf)] -= local[(t, off + r)];
            }
        }
    }
    Ok(p)
}

pub fn dense_oracle_solve(disc: &Discretization, method: Method, theta: f64) -> Result<OracleSolution> {
    let idx = &disc.index;
    let unknowns: usize = disc.blocks.iter().map(|b| b.n_cols()).sum::<usize>() + idx.n_mu();
    if unknowns > ORACLE_UNKNOWN_LIMIT {
        return Err(DdelmError::SizeGuard { unknowns, limit: ORACLE_UNKNOWN_LIMIT });
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(DdelmError::InvalidParameter { name: "theta", reason: format!("must lie in [0, 1], got {theta}") });
    }
    let tol = disc.config.rank_tol;
    let db = dense_blocks(disc);
    let nd = idx.n_delta();
    let npf = idx.n_pi_flux();

    let (mu, coeffs_flat, operator, rhs, p, s_pi, ktilde) = if method == Method::Ddelm || idx.n_mu() == 0 {
        let proj = &db.k * &db.k_pinv;
        let ipr = DMatrix::identity(proj.nrows(), proj.ncols()) - &proj;
        let d = -(&db.a * &db.k_pinv * &db.b);
        let dvec = -(&db.a * &db.k_pinv * &db.f);
        let sys = vstack(&(&ipr * &db.b), &d);
        let mut r = DVector::zeros(sys.nrows());
        r.rows_mut(0, db.f.len()).copy_from(&(&ipr * &db.f));
        r.rows_mut(db.f.len(), dvec.len()).copy_from(&dvec);
        let op = db.b.transpose() * &db.b + d.transpose() * &d - db.b.transpose() * &proj * &db.b;
        let rhs = db.b.transpose() * &db.f - db.b.transpose() * &proj * &db.f + d.transpose() * &dvec;
        let mu = if idx.n_mu() == 0 { DVector::zeros(0) } else { svd_pinv(&sys, 1e-14) * &r };
        let c = &db.k_pinv * (&db.f - &db.b * &mu);
        (mu, c, op, rhs, None, None, None)
    } else {
        let b_pi = db.b.columns(nd, idx.n_pi()).into_owned();
        let b_delta = db.b.columns(0, nd).into_owned();
        let a_pi = db.a.rows(nd, npf).into_owned();
        let a_delta = db.a.rows(0, nd).into_owned();
        let d_pipi = -(&a_pi * &db.k_pinv * &b_pi);
        let d_pidelta = -(&a_pi * &db.k_pinv * &b_delta);
        let d_pi = -(&a_pi * &db.k_pinv * &db.f);
        let proj = &db.k * &db.k_pinv;
        let s = b_pi.transpose() * &b_pi + d_pipi.transpose() * &d_pipi - b_pi.transpose() * &proj * &b_pi;

        let (nk, mk) = db.k.shape();
        let mut kt = DMatrix::zeros(nk + npf, mk + idx.n_pi());
        kt.view_mut((0, 0), (nk, mk)).copy_from(&db.k);
        kt.view_mut((0, mk), b_pi.shape()).copy_from(&b_pi);
        kt.view_mut((nk, mk), d_pipi.shape()).copy_from(&d_pipi);
        let bt = vstack(&b_delta, &d_pidelta);
        let mut ft = DVector::zeros(nk + npf);
        ft.rows_mut(0, nk).copy_from(&db.f);
        ft.rows_mut(nk, npf).copy_from(&d_pi);
        let mut at = DMatrix::zeros(nd, mk + idx.n_pi());
        at.view_mut((0, 0), a_delta.shape()).copy_from(&a_delta);

        let kt_pinv = svd_pinv(&kt, tol);
        let kproj = &kt * &kt_pinv;
        let dt = -(&at * &kt_pinv * &bt);
        let dtv = -(&at * &kt_pinv * &ft);
        let (pm, w, l) = if method == Method::DdelmNn && theta > 0.0 {
            let pm = dense_p(disc)?;
            let w = theta * pm.transpose() * &pm + (1.0 - theta) * DMatrix::identity(nd, nd);
            let l = vstack(&(theta.sqrt() * &pm), &((1.0 - theta).sqrt() * DMatrix::identity(nd, nd)));
            (Some(pm), w, l)
        } else {
            (None, DMatrix::identity(nd, nd), DMatrix::identity(nd, nd))
        };
        let ipr = DMatrix::identity(kproj.nrows(), kproj.ncols()) - &kproj;
        let sys = vstack(&(&ipr * &bt), &(&l * &dt));
        let mut r = DVector::zeros(sys.nrows());
        r.rows_mut(0, ft.len()).copy_from(&(&ipr * &ft));
        let ld = &l * &dtv;
        r.rows_mut(ft.len(), ld.len()).copy_from(&ld);
        let op = bt.transpose() * &bt + dt.transpose() * &w * &dt - bt.transpose() * &kproj * &bt;
        let rhs = bt.transpose() * &ft - bt.transpose() * &kproj * &ft + dt.transpose() * &w * &dtv;
        let mu_delta = svd_pinv(&sys, 1e-14) * &r;
        let sol = &kt_pinv * (&ft - &bt * &mu_delta);
        let c = sol.rows(0, mk).into_owned();
        let mut mu = DVector::zeros(idx.n_mu());
        mu.rows_mut(0, nd).copy_from(&mu_delta);
        mu.rows_mut(nd, idx.n_pi()).copy_from(&sol.rows(mk, idx.n_pi()));
        (mu, c, op, rhs, pm, Some(s), Some(kt))
    };

    let coeffs = (0..disc.n_subdomains())
        .map(|i| coeffs_flat.rows(db.col_offsets[i], disc.blocks[i].n_cols()).iter().copied().collect())
        .collect();
    let mut config = disc.config.clone();
    config.method = method;
    config.theta = theta;
    let report = SolveReport {
        config,
        coeffs,
        mu: mu.iter().copied().collect(),
        n_delta: nd,
        iterations: 0,
        residuals: Vec::new(),
        converged: true,
        timings: Timings::default(),
        local_ranks: disc.factors.iter().map(|f| f.rank()).collect(),
        errors: None,
    };
    Ok(OracleSolution { report, operator, rhs, p, s_pi, ktilde })
}
