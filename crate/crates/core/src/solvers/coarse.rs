//! Coarse space on the cross-point unknowns and the reduced Δ-system
//! `(B̃ᵀB̃ + D̃ᵀWD̃ − B̃ᵀK̃K̃⁺B̃) μ_Δ = (B̃ᵀ − B̃ᵀK̃K̃⁺) f̃ + D̃ᵀW d̃`.
//!
//! Here `K̃ = [K B_Π; 0 D_ΠΠ]`, `B̃ = [B_Δ; D_ΠΔ]`, `f̃ = [f; d_Π]`,
//! `Ã = [A_Δ 0]` and `W = θPᵀP + (1−θ)I`.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::cg::cg;
use super::neumann::NeumannSystem;
use super::{mtv, mv, Discretization, SolveReport};
use crate::error::{DdelmError, Result};

pub struct CoarseSystem {
    pub d_pipi: Mat<f64>,
    pub d_pidelta: Mat<f64>,
    pub d_pi: Vec<f64>,
    pub s_pi: Mat<f64>,
    llt: faer::linalg::solvers::Llt<f64>,
}

impl std::fmt::Debug for CoarseSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoarseSystem").field("n_pi", &self.s_pi.nrows()).finish_non_exhaustive()
    }
}

impl CoarseSystem {
    pub fn n_pi(&self) -> usize {
        self.s_pi.nrows()
    }

    /// `S_Π⁻¹ v`.
    pub fn solve_s(&self, v: &[f64]) -> Vec<f64> {
        if v.is_empty() {
            return Vec::new();
        }
        let mut m = Mat::from_fn(v.len(), 1, |i, _| v[i]);
        self.llt.solve_in_place(m.as_mut());
        m.col(0).iter().copied().collect()
    }
}

pub fn assemble_coarse(disc: &Discretization) -> Result<CoarseSystem> {
    let idx = &disc.index;
    let (nd, np, npf) = (idx.n_delta(), idx.n_pi(), idx.n_pi_flux());
    let mut d_pipi = Mat::<f64>::zeros(npf, np);
    let mut d_pidelta = Mat::<f64>::zeros(npf, nd);
    let mut d_pi = vec![0.0; npf];
    let mut s_pi = Mat::<f64>::zeros(np, np);
    for (i, loc) in idx.local.iter().enumerate() {
        let ops = &disc.local[i];
        for (r, row) in loc.flux_rows.iter().enumerate() {
            if row.global_row < nd {
                continue;
            }
            let gr = row.global_row - nd;
            d_pi[gr] -= ops.fkf[r];
            for (k, &g) in loc.trace_map.iter().enumerate() {
                if g >= nd {
                    d_pipi[(gr, g - nd)] += ops.e[(r, k)];
                } else {
                    d_pidelta[(gr, g)] += ops.e[(r, k)];
                }
            }
        }
        for (k, &g) in loc.trace_map.iter().enumerate() {
            if g < nd {
                continue;
            }
            for (k2, &g2) in loc.trace_map.iter().enumerate() {
                if g2 < nd {
                    continue;
                }
                let id = if k == k2 { 1.0 } else { 0.0 };
                s_pi[(g - nd, g2 - nd)] += id - ops.h[(k, k2)];
            }
        }
    }
    s_pi += d_pipi.transpose() * &d_pipi;
    // symmetric up to rounding in H
    let s_pi = Mat::from_fn(np, np, |a, b| 0.5 * (s_pi[(a, b)] + s_pi[(b, a)]));
    let llt = s_pi.llt(Side::Lower).map_err(|e| {
        DdelmError::CoarseFactorization(format!(
            "{e:?}; S_Π is not numerically positive definite"
        ))
    })?;
    Ok(CoarseSystem { d_pipi, d_pidelta, d_pi, s_pi, llt })
}

fn split_trace(disc: &Discretization, i: usize, full_local: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nd = disc.index.n_delta();
    let mut delta = vec![0.0; full_local.len()];
    let mut pi = vec![0.0; full_local.len()];
    for (k, &g) in disc.index.local[i].trace_map.iter().enumerate() {
        if g < nd {
            delta[k] = full_local[k];
        } else {
            pi[k] = full_local[k];
        }
    }
    (delta, pi)
}

/// `R_Π^i μ_Π` in trace-slot layout.
fn restrict_pi(disc: &Discretization, i: usize, mu_pi: &[f64]) -> Vec<f64> {
    let nd = disc.index.n_delta();
    disc.index.local[i].trace_map.iter().map(|&g| if g >= nd { mu_pi[g - nd] } else { 0.0 }).collect()
}

/// `R_Δ^i μ_Δ` in trace-slot layout.
fn restrict_delta(disc: &Discretization, i: usize, mu_delta: &[f64]) -> Vec<f64> {
    let nd = disc.index.n_delta();
    disc.index.local[i].trace_map.iter().map(|&g| if g < nd { mu_delta[g] } else { 0.0 }).collect()
}

/// `Σ (R^i)ᵀ v^i` split into its Δ and Π blocks.
fn gather_split(disc: &Discretization, parts: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut full = vec![0.0; disc.index.n_mu()];
    for (i, p) in parts.iter().enumerate() {
        disc.index.scatter_add(i, p, &mut full);
    }
    let pi = full.split_off(disc.index.n_delta());
    (full, pi)
}

/// Forward `K̃⁺ [φ; ψ]` with full local row vectors `φ^i`. Returns `(c, μ_Π)`.
pub fn apply_ktilde_pinv(
    disc: &Discretization,
    cs: &CoarseSystem,
    phi: &[Vec<f64>],
    psi: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let proj = disc.par_map(|i| -> Result<Vec<f64>> {
        let b = &disc.blocks[i];
        let p = disc.factors[i].project(&phi[i])?;
        let off = b.trace_offset();
        // B_Πᵀ restricted to this subdomain is −R_Πᵀ on the trace rows
        Ok((0..b.n_trace).map(|k| -(phi[i][off + k] - p[off + k])).collect())
    });
    let proj = proj.into_iter().collect::<Result<Vec<_>>>()?;
    let (_, mut rhs) = gather_split(disc, &proj);
    let dt = mtv(cs.d_pipi.as_ref(), psi);
    rhs.iter_mut().zip(&dt).for_each(|(a, b)| *a += b);
    let mu_pi = cs.solve_s(&rhs);
    let c = disc
        .par_map(|i| {
            let b = &disc.blocks[i];
            let mut v = phi[i].clone();
            let off = b.trace_offset();
            for (k, x) in restrict_pi(disc, i, &mu_pi).into_iter().enumerate() {
                v[off + k] += x;
            }
            disc.factors[i].apply_pinv(&v)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((c, mu_pi))
}

/// Transpose `(K̃⁺)ᵀ [φ; 0]` with coefficient-space vectors `φ^i`.
/// Returns the local row blocks and the Π-flux block.
pub fn apply_ktilde_pinv_transpose(
    disc: &Discretization,
    cs: &CoarseSystem,
    phi: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let kt = disc
        .par_map(|i| disc.factors[i].apply_pinv_transpose(&phi[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    // ν = S⁻¹(−B_Πᵀ(K⁺)ᵀφ) = S⁻¹(Σ R_Πᵀ [(K⁺)ᵀφ]_t)
    let traces: Vec<Vec<f64>> = (0..disc.n_subdomains())
        .map(|i| {
            let off = disc.blocks[i].trace_offset();
            kt[i][off..off + disc.blocks[i].n_trace].to_vec()
        })
        .collect();
    let (_, rhs) = gather_split(disc, &traces);
    let nu = cs.solve_s(&rhs);
    let rows = disc
        .par_map(|i| -> Result<Vec<f64>> {
            let b = &disc.blocks[i];
            let off = b.trace_offset();
            let mut bnu = vec![0.0; b.n_rows()];
            for (k, x) in restrict_pi(disc, i, &nu).into_iter().enumerate() {
                bnu[off + k] = -x;
            }
            let pbnu = disc.factors[i].project(&bnu)?;
            Ok((0..b.n_rows()).map(|r| kt[i][r] - pbnu[r] + bnu[r]).collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, mv(cs.d_pipi.as_ref(), &nu)))
}

/// The reduced Δ-system with its weight `W`.
pub struct ReducedCs<'a> {
    pub disc: &'a Discretization,
    pub cs: CoarseSystem,
    pub neumann: Option<&'a NeumannSystem>,
    pub theta: f64,
}

impl<'a> ReducedCs<'a> {
    pub fn new(disc: &'a Discretization, theta: Option<f64>) -> Result<Self> {
        let cs = assemble_coarse(disc)?;
        let theta = theta.unwrap_or(0.0);
        let neumann = if theta > 0.0 { Some(disc.neumann()?) } else { None };
        Ok(Self { disc, cs, neumann, theta })
    }

    /// `W z = θ Pᵀ P z + (1 − θ) z` on the Δ flux rows.
    pub fn apply_w(&self, z: &[f64]) -> Vec<f64> {
        match &self.neumann {
            None => z.to_vec(),
            Some(ns) => {
                let ptp = ns.apply_pt(self.disc, &ns.apply_p(self.disc, z));
                z.iter().zip(&ptp).map(|(a, b)| self.theta * b + (1.0 - self.theta) * a).collect()
            }
        }
    }

    /// `D̃ μ_Δ` together with the intermediate `μ_Π`, local `τ^i` and `φ^i`.
    fn forward(&self, mu: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let disc = self.disc;
        let nd = disc.index.n_delta();
        let phi: Vec<Vec<f64>> = (0..disc.n_subdomains())
            .map(|i| restrict_delta(disc, i, mu).into_iter().map(|v| -v).collect())
            .collect();
        let psi = mv(self.cs.d_pidelta.as_ref(), mu);
        let proj = disc.par_map(|i| {
            let hp = mv(disc.local[i].h.as_ref(), &phi[i]);
            phi[i].iter().zip(&hp).map(|(a, b)| -(a - b)).collect::<Vec<_>>()
        });
        let (_, mut rhs) = gather_split(disc, &proj);
        let dt = mtv(self.cs.d_pipi.as_ref(), &psi);
        rhs.iter_mut().zip(&dt).for_each(|(a, b)| *a += b);
        let mu_pi = self.cs.solve_s(&rhs);
        let tau: Vec<Vec<f64>> = (0..disc.n_subdomains())
            .map(|i| phi[i].iter().zip(restrict_pi(disc, i, &mu_pi)).map(|(a, b)| a + b).collect())
            .collect();
        let et = disc.par_map(|i| mv(disc.local[i].e.as_ref(), &tau[i]));
        let mut y = vec![0.0; nd];
        for (i, p) in et.iter().enumerate() {
            for (r, row) in disc.index.local[i].flux_rows.iter().enumerate() {
                if row.global_row < nd {
                    y[row.global_row] -= p[r];
                }
            }
        }
        (y, mu_pi, tau, phi, psi)
    }

    /// `D̃ μ_Δ`.
    pub fn apply_dtilde(&self, mu: &[f64]) -> Vec<f64> {
        self.forward(mu).0
    }

    /// `D̃ᵀ z` for a Δ flux-row vector `z`.
    pub fn apply_dtilde_t(&self, z: &[f64]) -> Vec<f64> {
        let disc = self.disc;
        let nd = disc.index.n_delta();
        let ez = disc.par_map(|i| {
            let a: Vec<f64> = disc.index.local[i]
                .flux_rows
                .iter()
                .map(|row| if row.global_row < nd { z[row.global_row] } else { 0.0 })
                .collect();
            mtv(disc.local[i].e.as_ref(), &a)
        });
        let (_, rhs) = gather_split(disc, &ez);
        let nu = self.cs.solve_s(&rhs);
        let omega = disc.par_map(|i| {
            let rnu = restrict_pi(disc, i, &nu);
            let hr = mv(disc.local[i].h.as_ref(), &rnu);
            (0..rnu.len()).map(|k| ez[i][k] - (rnu[k] - hr[k])).collect::<Vec<_>>()
        });
        let (mut out, _) = gather_split(disc, &omega);
        let dnu = mv(self.cs.d_pipi.as_ref(), &nu);
        let corr = mtv(self.cs.d_pidelta.as_ref(), &dnu);
        out.iter_mut().zip(&corr).for_each(|(a, b)| *a -= b);
        out
    }

    /// Operator `B̃ᵀB̃ + D̃ᵀWD̃ − B̃ᵀK̃K̃⁺B̃` on `μ_Δ`.
    pub fn apply(&self, mu: &[f64]) -> Vec<f64> {
        let disc = self.disc;
        let (y, mu_pi, tau, phi, psi) = self.forward(mu);
        let dwd = self.apply_dtilde_t(&self.apply_w(&y));
        // B̃ᵀB̃μ − B̃ᵀK̃K̃⁺B̃μ = Σ −R_Δᵀ(φ − Hτ) + D_ΠΔᵀ(ψ − D_ΠΠ μ_Π)
        let local = disc.par_map(|i| {
            let ht = mv(disc.local[i].h.as_ref(), &tau[i]);
            let (d, _) = split_trace(disc, i, &phi[i].iter().zip(&ht).map(|(a, b)| -(a - b)).collect::<Vec<_>>());
            d
        });
        let (mut out, _) = gather_split(disc, &local);
        let dm = mv(self.cs.d_pipi.as_ref(), &mu_pi);
        let resid: Vec<f64> = psi.iter().zip(&dm).map(|(a, b)| a - b).collect();
        let corr = mtv(self.cs.d_pidelta.as_ref(), &resid);
        for k in 0..out.len() {
            out[k] += corr[k] + dwd[k];
        }
        out
    }

    /// `f̃ − B̃ μ_Δ` as local row vectors and the Π flux block.
    fn shifted_rhs(&self, mu: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let disc = self.disc;
        let phi = (0..disc.n_subdomains())
            .map(|i| {
                let b = &disc.blocks[i];
                let mut v = b.f.clone();
                let off = b.trace_offset();
                for (k, x) in restrict_delta(disc, i, mu).into_iter().enumerate() {
                    v[off + k] += x;
                }
                v
            })
            .collect();
        let dm = mv(self.cs.d_pidelta.as_ref(), mu);
        (phi, self.cs.d_pi.iter().zip(&dm).map(|(a, b)| a - b).collect())
    }

    /// Right-hand side `(B̃ᵀ − B̃ᵀK̃K̃⁺) f̃ + D̃ᵀ W d̃` with `d̃ = −Ã K̃⁺ f̃`.
    pub fn rhs(&self) -> Result<Vec<f64>> {
        let disc = self.disc;
        let nd = disc.index.n_delta();
        let (phi, psi) = self.shifted_rhs(&vec![0.0; nd]);
        let (c, mu_pi) = apply_ktilde_pinv(disc, &self.cs, &phi, &psi)?;
        let ac = disc.apply_flux(&c);
        let dt: Vec<f64> = ac[..nd].iter().map(|v| -v).collect();
        let dwd = self.apply_dtilde_t(&self.apply_w(&dt));
        // residual of the first block row on the trace rows
        let local = disc.par_map(|i| {
            let b = &disc.blocks[i];
            let off = b.trace_offset();
            let kc = mv(b.k.as_ref().subrows(off, b.n_trace), &c[i]);
            let rp = restrict_pi(disc, i, &mu_pi);
            let res: Vec<f64> = (0..b.n_trace).map(|k| -(phi[i][off + k] - kc[k] + rp[k])).collect();
            split_trace(disc, i, &res).0
        });
        let (mut out, _) = gather_split(disc, &local);
        let dm = mv(self.cs.d_pipi.as_ref(), &mu_pi);
        let resid: Vec<f64> = psi.iter().zip(&dm).map(|(a, b)| a - b).collect();
        let corr = mtv(self.cs.d_pidelta.as_ref(), &resid);
        for k in 0..nd {
            out[k] += corr[k] + dwd[k];
        }
        Ok(out)
    }

    /// `[c; μ_Π] = K̃⁺(f̃ − B̃ μ_Δ)`.
    pub fn reconstruct(&self, mu: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let (phi, psi) = self.shifted_rhs(mu);
        apply_ktilde_pinv(self.disc, &self.cs, &phi, &psi)
    }
}

pub fn ddelm_cs_solve(disc: &Discretization, theta: Option<f64>) -> Result<SolveReport> {
    if let Some(t) = theta {
        if !(0.0..=1.0).contains(&t) {
            return Err(DdelmError::InvalidParameter { name: "theta", reason: format!("must lie in [0, 1], got {t}") });
        }
    }
    if disc.index.n_mu() == 0 {
        return super::vanilla::ddelm_solve(disc);
    }
    let mut timings = disc.timings.clone();
    let t = Instant::now();
    let red = ReducedCs::new(disc, theta)?;
    timings.setup = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let rhs = red.rhs()?;
    let out = cg(|v: &[f64]| Ok(red.apply(v)), &rhs, &disc.config.cg)?;
    timings.cg = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (coeffs, mu_pi) = red.reconstruct(&out.x)?;
    timings.reconstruction = t.elapsed().as_secs_f64();
    let mut mu = out.x.clone();
    mu.extend_from_slice(&mu_pi);
    Ok(disc.report(coeffs, mu, Some(out), timings))
}
