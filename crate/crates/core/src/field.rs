//! Global piecewise ELM field assembled from local coefficients.

use crate::error::{DdelmError, Result};
use crate::features::FeatureLayer;
use crate::geometry::DomainPartition;

/// Anything with a value and gradient on the unit square.
pub trait Field: Sync {
    fn value_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]);
}

impl Field for crate::problems::ExactSolution {
    fn value_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        (self.value(x), self.gradient(x))
    }
}

/// `u(x) = Σ_j c^i_j φ^i_j(x)` on the subdomain containing `x`.
pub struct ElmField<'a> {
    pub partition: &'a DomainPartition,
    pub layers: &'a [FeatureLayer],
    pub coeffs: &'a [Vec<f64>],
}

impl<'a> ElmField<'a> {
    pub fn new(partition: &'a DomainPartition, layers: &'a [FeatureLayer], coeffs: &'a [Vec<f64>]) -> Result<Self> {
        if layers.len() != partition.n_subdomains() || coeffs.len() != layers.len() {
            return Err(DdelmError::Dimension {
                context: "one layer and coefficient vector per subdomain",
                expected: partition.n_subdomains(),
                actual: coeffs.len().min(layers.len()),
            });
        }
        for (l, c) in layers.iter().zip(coeffs) {
            if l.len() != c.len() {
                return Err(DdelmError::Dimension { context: "coefficients per neuron", expected: l.len(), actual: c.len() });
            }
        }
        Ok(Self { partition, layers, coeffs })
    }
}

impl Field for ElmField<'_> {
    fn value_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let i = self.partition.locate(x);
        self.layers[i].eval_field(&self.coeffs[i], x)
    }
}

/// A difference of two fields, `a − b`.
pub struct Difference<'a>(pub &'a dyn Field, pub &'a dyn Field);

impl Field for Difference<'_> {
    fn value_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let (u, g) = self.0.value_grad(x);
        let (v, h) = self.1.value_grad(x);
        (u - v, [g[0] - h[0], g[1] - h[1]])
    }
}
