//! Random tanh feature layers and their analytic derivatives.

use faer::Mat;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{DdelmError, Result};
use crate::geometry::Subdomain;

pub const MAX_ORDER: usize = 4;

/// Linear combination `Σ coef · ∂^{a+b} / ∂x^a ∂y^b` with constant
/// coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DiffOp {
    pub terms: Vec<(usize, usize, f64)>,
}

impl DiffOp {
    pub fn new(terms: Vec<(usize, usize, f64)>) -> Self {
        let mut op = DiffOp { terms: Vec::new() };
        for (a, b, c) in terms {
            op.push(a, b, c);
        }
        op
    }

    pub fn identity() -> Self {
        DiffOp::new(vec![(0, 0, 1.0)])
    }

    pub fn derivative(a: usize, b: usize) -> Self {
        DiffOp::new(vec![(a, b, 1.0)])
    }

    pub fn laplacian() -> Self {
        DiffOp::new(vec![(2, 0, 1.0), (0, 2, 1.0)])
    }

    pub fn bilaplacian() -> Self {
        DiffOp::new(vec![(4, 0, 1.0), (2, 2, 2.0), (0, 4, 1.0)])
    }

    fn push(&mut self, a: usize, b: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        if let Some(t) = self.terms.iter_mut().find(|t| t.0 == a && t.1 == b) {
            t.2 += c;
        } else {
            self.terms.push((a, b, c));
        }
        self.terms.retain(|t| t.2 != 0.0);
    }

    pub fn scaled(&self, s: f64) -> Self {
        DiffOp::new(self.terms.iter().map(|&(a, b, c)| (a, b, c * s)).collect())
    }

    pub fn plus(&self, other: &DiffOp) -> Self {
        let mut out = self.clone();
        for &(a, b, c) in &other.terms {
            out.push(a, b, c);
        }
        out
    }

    pub fn dx(&self) -> Self {
        DiffOp::new(self.terms.iter().map(|&(a, b, c)| (a + 1, b, c)).collect())
    }

    pub fn dy(&self) -> Self {
        DiffOp::new(self.terms.iter().map(|&(a, b, c)| (a, b + 1, c)).collect())
    }

    /// Derivative along `n` of this operator.
    pub fn directional(&self, n: [f64; 2]) -> Self {
        self.dx().scaled(n[0]).plus(&self.dy().scaled(n[1]))
    }

    pub fn max_order(&self) -> usize {
        self.terms.iter().map(|t| t.0 + t.1).max().unwrap_or(0)
    }
}

/// `σ^{(k)}(z)` for `k = 0..=4` with `σ = tanh`.
#[inline]
pub fn tanh_derivatives(z: f64) -> [f64; 5] {
    let s0 = z.tanh();
    let s1 = 1.0 - s0 * s0;
    let s2 = -2.0 * s0 * s1;
    let s3 = -2.0 * s1 * s1 - 2.0 * s0 * s2;
    let s4 = -6.0 * s1 * s2 - 2.0 * s0 * s3;
    [s0, s1, s2, s3, s4]
}

/// Hidden layer `φ_j(x) = tanh(w_j·x + b_j)` of one subdomain network.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureLayer {
    pub subdomain: usize,
    pub weights: Vec<[f64; 2]>,
    pub biases: Vec<f64>,
    /// Points where each feature's argument vanishes.
    pub centers: Vec<[f64; 2]>,
    pub l: f64,
    pub r: f64,
    pub seed: u64,
}

/// Weight scale from `l = c · M^{1/2} / diam(B̄_r(Ω^i))`, reading the
/// diameter of the r-neighbourhood as `diam(Ω^i) + 2r`.
pub fn weight_scale_from_formula(c: f64, m: usize, sub: &Subdomain, r: f64) -> f64 {
    c * (m as f64).sqrt() / (sub.diam() + 2.0 * r)
}

/// Sample `w_j ~ U([-l,l]²)`, `ξ_j ~ U(box enlarged by r)`, `b_j = -w_j·ξ_j`.
///
/// The generator is ChaCha8 seeded with `seed` on stream `sub.index`, so
/// every subdomain draws an independent, reproducible sequence.
pub fn init_layer(m: usize, sub: &Subdomain, l: f64, r: f64, seed: u64) -> Result<FeatureLayer> {
    if m == 0 {
        return Err(DdelmError::InvalidParameter { name: "M", reason: "must be positive".into() });
    }
    if !(l > 0.0) {
        return Err(DdelmError::InvalidParameter { name: "l", reason: format!("must be positive, got {l}") });
    }
    if !(r > 0.0) {
        return Err(DdelmError::InvalidParameter { name: "r", reason: format!("must be positive, got {r}") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sub.index as u64);
    let uw = Uniform::new_inclusive(-l, l).expect("valid weight range");
    let ux = Uniform::new_inclusive(sub.x0 - r, sub.x1 + r).expect("valid x range");
    let uy = Uniform::new_inclusive(sub.y0 - r, sub.y1 + r).expect("valid y range");
    let mut weights = Vec::with_capacity(m);
    let mut biases = Vec::with_capacity(m);
    let mut centers = Vec::with_capacity(m);
    for _ in 0..m {
        let w = [uw.sample(&mut rng), uw.sample(&mut rng)];
        let xi = [ux.sample(&mut rng), uy.sample(&mut rng)];
        biases.push(-(w[0] * xi[0] + w[1] * xi[1]));
        weights.push(w);
        centers.push(xi);
    }
    Ok(FeatureLayer { subdomain: sub.index, weights, biases, centers, l, r, seed })
}

impl FeatureLayer {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    fn argument(&self, j: usize, x: [f64; 2]) -> f64 {
        let w = self.weights[j];
        w[0] * x[0] + w[1] * x[1] + self.biases[j]
    }

    /// Matrix of `(op φ_j)(x_k)` with rows indexed by point.
    pub fn eval_operator(&self, points: &[[f64; 2]], op: &DiffOp) -> Result<Mat<f64>> {
        let order = op.max_order();
        if order > MAX_ORDER {
            return Err(DdelmError::DerivativeOrder { order });
        }
        let mut out = Mat::zeros(points.len(), self.len());
        let mut poly = [0.0f64; MAX_ORDER + 1];
        for j in 0..self.len() {
            let w = self.weights[j];
            poly.iter_mut().for_each(|p| *p = 0.0);
            for &(a, b, c) in &op.terms {
                poly[a + b] += c * w[0].powi(a as i32) * w[1].powi(b as i32);
            }
            let mut col = out.col_mut(j);
            for (k, x) in points.iter().enumerate() {
                let s = tanh_derivatives(self.argument(j, *x));
                let mut v = 0.0;
                for q in 0..=order {
                    v += poly[q] * s[q];
                }
                col[k] = v;
            }
        }
        Ok(out)
    }

    /// Matrix of `∂^{a+b} φ_j / ∂x^a ∂y^b` at each point.
    pub fn eval_derivative_matrix(&self, points: &[[f64; 2]], multi_index: (usize, usize)) -> Result<Mat<f64>> {
        self.eval_operator(points, &DiffOp::derivative(multi_index.0, multi_index.1))
    }

    /// Value and gradient of `Σ_j c_j φ_j` at `x`.
    pub fn eval_field(&self, coeffs: &[f64], x: [f64; 2]) -> (f64, [f64; 2]) {
        let mut u = 0.0;
        let mut g = [0.0, 0.0];
        for (j, &c) in coeffs.iter().enumerate() {
            let t = self.argument(j, x).tanh();
            let d = c * (1.0 - t * t);
            u += c * t;
            g[0] += d * self.weights[j][0];
            g[1] += d * self.weights[j][1];
        }
        (u, g)
    }
}
