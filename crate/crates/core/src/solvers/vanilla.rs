//! Reduced interface system `(BᵀB + DᵀD − BᵀKK⁺B) μ = (Bᵀ − BᵀKK⁺) f + Dᵀ d`.

use std::time::Instant;

use super::cg::cg;
use super::{mtv, mv, Discretization, SolveReport};
use crate::error::Result;

/// `D μ = −A K⁺ B μ`.
pub fn apply_d(disc: &Discretization, mu: &[f64]) -> Vec<f64> {
    let parts = disc.par_map(|i| mv(disc.local[i].e.as_ref(), &disc.index.restrict(i, mu)));
    let mut y = vec![0.0; disc.index.n_flux_rows()];
    for (i, p) in parts.iter().enumerate() {
        disc.gather_flux(i, p, &mut y);
    }
    y
}

/// `Dᵀ y`.
pub fn apply_dt(disc: &Discretization, y: &[f64]) -> Vec<f64> {
    let parts = disc.par_map(|i| mtv(disc.local[i].e.as_ref(), &disc.restrict_flux(i, y)));
    let mut out = vec![0.0; disc.index.n_mu()];
    for (i, p) in parts.iter().enumerate() {
        disc.index.scatter_add(i, p, &mut out);
    }
    out
}

/// `d = −A K⁺ f`.
pub fn rhs_d(disc: &Discretization) -> Vec<f64> {
    let mut y = vec![0.0; disc.index.n_flux_rows()];
    for i in 0..disc.n_subdomains() {
        let neg: Vec<f64> = disc.local[i].fkf.iter().map(|v| -v).collect();
        disc.gather_flux(i, &neg, &mut y);
    }
    y
}

/// Operator of the reduced system.
pub fn ddelm_reduced_apply(disc: &Discretization, mu: &[f64]) -> Vec<f64> {
    // Bᵀ(I − KK⁺)B = Σ Rᵀ(I − H)R
    let parts = disc.par_map(|i| {
        let t = disc.index.restrict(i, mu);
        let ht = mv(disc.local[i].h.as_ref(), &t);
        let et = mv(disc.local[i].e.as_ref(), &t);
        (t.iter().zip(&ht).map(|(a, b)| a - b).collect::<Vec<_>>(), et)
    });
    let mut out = vec![0.0; disc.index.n_mu()];
    let mut y = vec![0.0; disc.index.n_flux_rows()];
    for (i, (proj, et)) in parts.iter().enumerate() {
        disc.index.scatter_add(i, proj, &mut out);
        disc.gather_flux(i, et, &mut y);
    }
    let dty = apply_dt(disc, &y);
    out.iter_mut().zip(&dty).for_each(|(a, b)| *a += b);
    out
}

/// Right-hand side `(Bᵀ − BᵀKK⁺) f + Dᵀ d`.
pub fn ddelm_rhs(disc: &Discretization) -> Result<Vec<f64>> {
    let parts = disc.par_map(|i| -> Result<Vec<f64>> {
        let b = &disc.blocks[i];
        let pf = disc.factors[i].project(&b.f)?;
        let off = b.trace_offset();
        Ok((0..b.n_trace).map(|k| -(b.f[off + k] - pf[off + k])).collect())
    });
    let mut out = vec![0.0; disc.index.n_mu()];
    for (i, p) in parts.into_iter().enumerate() {
        disc.index.scatter_add(i, &p?, &mut out);
    }
    let dtd = apply_dt(disc, &rhs_d(disc));
    out.iter_mut().zip(&dtd).for_each(|(a, b)| *a += b);
    Ok(out)
}

pub fn ddelm_solve(disc: &Discretization) -> Result<SolveReport> {
    let mut timings = disc.timings.clone();
    let t = Instant::now();
    let (mu, outcome) = if disc.index.n_mu() == 0 {
        (Vec::new(), None)
    } else {
        let rhs = ddelm_rhs(disc)?;
        let out = cg(|v: &[f64]| Ok(ddelm_reduced_apply(disc, v)), &rhs, &disc.config.cg)?;
        (out.x.clone(), Some(out))
    };
    timings.cg = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let coeffs = disc.reconstruct(&mu)?;
    timings.reconstruction = t.elapsed().as_secs_f64();
    Ok(disc.report(coeffs, mu, outcome, timings))
}
