//! Approximate Gaussian random field built from 256 random sine modes.

use std::f64::consts::PI;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::Serialize;

use crate::error::{DdelmError, Result};

pub const GRF_TERMS: usize = 256;

/// `f(x) = Σ a_i sin(w_i·x + b_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrfField {
    pub alpha: f64,
    pub seed: u64,
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<[f64; 2]>,
    pub phases: Vec<f64>,
}

/// Draw `a_i ~ N(0, α⁴/256)`, `w_i ~ N(0, α² I)`, `b_i ~ U(0, 2π)`.
pub fn sample_grf(alpha: f64, seed: u64) -> Result<GrfField> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(DdelmError::InvalidParameter {
            name: "alpha",
            reason: format!("must be positive and finite, got {alpha}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = Normal::new(0.0, alpha * alpha / (GRF_TERMS as f64).sqrt()).expect("finite std");
    let freq = Normal::new(0.0, alpha).expect("finite std");
    let phase = Uniform::new(0.0, 2.0 * PI).expect("valid phase range");
    let mut amplitudes = Vec::with_capacity(GRF_TERMS);
    let mut frequencies = Vec::with_capacity(GRF_TERMS);
    let mut phases = Vec::with_capacity(GRF_TERMS);
    for _ in 0..GRF_TERMS {
        amplitudes.push(amp.sample(&mut rng));
        frequencies.push([freq.sample(&mut rng), freq.sample(&mut rng)]);
        // open interval
        let mut b = phase.sample(&mut rng);
        while b == 0.0 {
            b = phase.sample(&mut rng);
        }
        phases.push(b);
    }
    Ok(GrfField { alpha, seed, amplitudes, frequencies, phases })
}

impl GrfField {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.frequencies)
            .zip(&self.phases)
            .map(|((a, w), b)| a * (w[0] * x[0] + w[1] * x[1] + b).sin())
            .sum()
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for ((a, w), b) in self.amplitudes.iter().zip(&self.frequencies).zip(&self.phases) {
            let c = a * (w[0] * x[0] + w[1] * x[1] + b).cos();
            g[0] += c * w[0];
            g[1] += c * w[1];
        }
        g
    }
}

pub fn eval_grf(g: &GrfField, x: [f64; 2]) -> f64 {
    g.eval(x)
}

/// `ρ(x) = tanh(grf(x)) + 1.1` together with `∇ρ`.
pub fn eval_rho(g: &GrfField, x: [f64; 2]) -> (f64, [f64; 2]) {
    let t = g.eval(x).tanh();
    let s = 1.0 - t * t;
    let dg = g.gradient(x);
    (t + 1.1, [s * dg[0], s * dg[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_term(a: f64, w: [f64; 2], b: f64) -> GrfField {
        GrfField { alpha: 1.0, seed: 0, amplitudes: vec![a], frequencies: vec![w], phases: vec![b] }
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        assert!(sample_grf(0.0, 1).is_err());
        assert!(sample_grf(-2.0, 1).is_err());
    }

    #[test]
    fn term_count_and_phase_range() {
        let g = sample_grf(32.0, 7).unwrap();
        assert_eq!(g.amplitudes.len(), GRF_TERMS);
        assert_eq!(g.frequencies.len(), GRF_TERMS);
        assert!(g.phases.iter().all(|&b| b > 0.0 && b < 2.0 * PI));
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(sample_grf(32.0, 5).unwrap(), sample_grf(32.0, 5).unwrap());
        assert_ne!(sample_grf(32.0, 5).unwrap(), sample_grf(32.0, 6).unwrap());
    }

    #[test]
    fn vanishing_alpha_gives_vanishing_field() {
        let g = sample_grf(1e-6, 3).unwrap();
        assert!(g.eval([0.4, 0.6]).abs() < 1e-10);
    }

    #[test]
    fn closed_form_cases() {
        let zero = single_term(0.0, [3.0, 1.0], 1.0);
        assert_eq!(zero.eval([0.2, 0.9]), 0.0);
        let c = single_term(1.0, [0.0, 0.0], PI / 2.0);
        for x in [[0.0, 0.0], [0.3, 0.8], [1.0, 1.0]] {
            assert!((c.eval(x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_of_zero_field() {
        let z = single_term(0.0, [1.0, 1.0], 0.5);
        let (r, g) = eval_rho(&z, [0.5, 0.5]);
        assert!((r - 1.1).abs() < 1e-15);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn rho_range_and_gradient_against_finite_differences() {
        let g = sample_grf(2.0, 17).unwrap();
        let h = 1e-5;
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let x = [next(), next()];
            let (r, grad) = eval_rho(&g, x);
            assert!((0.1..=2.1).contains(&r));
            let fx = (eval_rho(&g, [x[0] + h, x[1]]).0 - eval_rho(&g, [x[0] - h, x[1]]).0) / (2.0 * h);
            let fy = (eval_rho(&g, [x[0], x[1] + h]).0 - eval_rho(&g, [x[0], x[1] - h]).0) / (2.0 * h);
            let norm = grad[0].hypot(grad[1]).max(1e-3);
            assert!(((fx - grad[0]).hypot(fy - grad[1])) / norm < 1e-6, "{x:?}");
        }
        let rough = sample_grf(32.0, 1).unwrap();
        for k in 0..50 {
            let r = eval_rho(&rough, [k as f64 / 49.0, 0.37]).0;
            assert!((0.1..=2.1).contains(&r));
        }
    }
}
