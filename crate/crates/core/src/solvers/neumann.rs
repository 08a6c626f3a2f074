//! Neumann-to-Dirichlet map `P = Ā K̄⁺ B̄` on the Δ interface.
//!
//! `K̄^i` keeps the interior and boundary rows of `K^i`, imposes traces at
//! the local cross-points and pointwise fluxes at the local Δ points.

use faer::Mat;

use super::lsq::{factorize, LsFactor};
use super::{mtv, mv, Discretization};
use crate::assembly::interior_rows;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct NeumannLocal {
    pub kbar: Mat<f64>,
    pub factor: LsFactor,
    /// `C_Δ K̄⁺` restricted to the Δ flux columns: local Δ traces per unit
    /// flux datum.
    pub ntd: Mat<f64>,
    /// Global Δ index of each local Δ flux datum.
    pub flux_slots: Vec<usize>,
    /// Global Δ index of each local Δ trace.
    pub trace_slots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct NeumannSystem {
    pub local: Vec<NeumannLocal>,
    pub n_delta: usize,
}

fn stack(blocks: &[Mat<f64>], ncols: usize) -> Mat<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(n, ncols);
    let mut r0 = 0;
    for b in blocks {
        out.as_mut().submatrix_mut(r0, 0, b.nrows(), ncols).copy_from(b);
        r0 += b.nrows();
    }
    out
}

fn build_local(disc: &Discretization, i: usize) -> Result<NeumannLocal> {
    let pb = &disc.problem;
    let layer = &disc.layers[i];
    let pts = &disc.points.local[i];
    let iface = &disc.index.local[i];
    let nc = pb.components();
    let npts = iface.n_points();
    let nd_pts = disc.index.n_delta_points;

    let cross: Vec<usize> = (0..npts).filter(|&k| iface.is_cross[k]).collect();
    let delta: Vec<usize> = (0..npts).filter(|&k| !iface.is_cross[k]).collect();
    let cross_x: Vec<[f64; 2]> = cross.iter().map(|&k| pts.interface[k]).collect();
    let delta_x: Vec<[f64; 2]> = delta.iter().map(|&k| pts.interface[k]).collect();

    let mut blocks = vec![interior_rows(pb, layer, &pts.interior)?];
    for op in pb.boundary_ops() {
        blocks.push(layer.eval_operator(&pts.boundary, &op)?);
    }
    for op in pb.continuity_ops() {
        blocks.push(layer.eval_operator(&cross_x, &op)?);
    }
    let n_dirichlet: usize = blocks.iter().map(|b| b.nrows()).sum();

    // flux rows in the same order as the local Δ flux rows of A
    let mut flux_slots = Vec::new();
    let mut flux = Mat::<f64>::zeros(nc * delta.len(), layer.len());
    let mut r = 0;
    for row in &iface.flux_rows {
        if iface.is_cross[row.point] {
            continue;
        }
        let op = &pb.flux_ops(row.side.normal())[row.component];
        let x = pts.interface[row.point];
        let v = layer.eval_operator(&[x], op)?;
        let w = pb.flux_weight(x);
        for j in 0..layer.len() {
            flux[(r, j)] = w * v[(0, j)];
        }
        flux_slots.push(row.global_row);
        r += 1;
    }
    blocks.push(flux);
    let kbar = stack(&blocks, layer.len());
    let factor = factorize(kbar.as_ref(), disc.config.rank_tol)?;

    let cd = stack(
        &pb.continuity_ops().iter().map(|op| layer.eval_operator(&delta_x, op)).collect::<Result<Vec<_>>>()?,
        layer.len(),
    );
    let cols = factor.pinv_columns(n_dirichlet, flux_slots.len());
    let ntd = &cd * &cols;
    let trace_slots = (0..nc)
        .flat_map(|comp| delta.iter().map(move |&k| (k, comp)))
        .map(|(k, comp)| iface.trace_map[comp * npts + k])
        .collect::<Vec<_>>();
    debug_assert!(trace_slots.iter().chain(&flux_slots).all(|&g| g < nd_pts * nc));
    Ok(NeumannLocal { kbar, factor, ntd, flux_slots, trace_slots })
}

impl NeumannSystem {
    pub fn build(disc: &Discretization) -> Result<Self> {
        let local = disc.par_map(|i| build_local(disc, i)).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { local, n_delta: disc.index.n_delta() })
    }

    /// `P v = Σ R_Δᵀ C_Δ K̄⁺ (−R_f v)`.
    pub fn apply_p(&self, disc: &Discretization, v: &[f64]) -> Vec<f64> {
        let parts = disc.par_map(|i| {
            let l = &self.local[i];
            let data: Vec<f64> = l.flux_slots.iter().map(|&g| -v[g]).collect();
            mv(l.ntd.as_ref(), &data)
        });
        let mut out = vec![0.0; self.n_delta];
        for (l, p) in self.local.iter().zip(&parts) {
            for (&g, x) in l.trace_slots.iter().zip(p) {
                out[g] += x;
            }
        }
        out
    }

    /// `Pᵀ w`.
    pub fn apply_pt(&self, disc: &Discretization, w: &[f64]) -> Vec<f64> {
        let parts = disc.par_map(|i| {
            let l = &self.local[i];
            let data: Vec<f64> = l.trace_slots.iter().map(|&g| w[g]).collect();
            mtv(l.ntd.as_ref(), &data)
        });
        let mut out = vec![0.0; self.n_delta];
        for (l, p) in self.local.iter().zip(&parts) {
            for (&g, x) in l.flux_slots.iter().zip(p) {
                out[g] -= x;
            }
        }
        out
    }

    /// `P v` through full local least-squares solves, bypassing the cached
    /// `C_Δ K̄⁺` blocks.
    pub fn apply_p_direct(&self, disc: &Discretization, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_delta];
        for (i, l) in self.local.iter().enumerate() {
            let n_flux = l.flux_slots.len();
            let mut rhs = vec![0.0; l.kbar.nrows()];
            let off = l.kbar.nrows() - n_flux;
            for (r, &g) in l.flux_slots.iter().enumerate() {
                rhs[off + r] = -v[g];
            }
            let c = l.factor.apply_pinv(&rhs)?;
            let pts = &disc.points.local[i];
            let iface = &disc.index.local[i];
            let delta_x: Vec<[f64; 2]> =
                (0..iface.n_points()).filter(|&k| !iface.is_cross[k]).map(|k| pts.interface[k]).collect();
            let mut traces = Vec::new();
            for op in disc.problem.continuity_ops() {
                let m = disc.layers[i].eval_operator(&delta_x, &op)?;
                traces.extend(mv(m.as_ref(), &c));
            }
            for (&g, x) in l.trace_slots.iter().zip(&traces) {
                out[g] += x;
            }
        }
        Ok(out)
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.local.iter().map(|l| l.factor.rank()).collect()
    }
}
