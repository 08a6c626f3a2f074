//! PDE problems on the unit square: interior, boundary, continuity and flux
//! operators together with forcing, boundary data and exact solutions.

mod grf;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use grf::{eval_grf, eval_rho, sample_grf, GrfField, GRF_TERMS};

use crate::error::{DdelmError, Result};
use crate::features::DiffOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProblemKind {
    Poisson,
    VariableCoefficientPoisson,
    Biharmonic,
}

/// One-dimensional factor of a separable exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Factor {
    /// `sin(k x)`
    Sin(f64),
    /// `e^x`
    Exp,
}

impl Factor {
    fn derivative(self, order: usize, t: f64) -> f64 {
        match self {
            Factor::Sin(k) => k.powi(order as i32) * (k * t + order as f64 * PI / 2.0).sin(),
            Factor::Exp => t.exp(),
        }
    }
}

/// Exact solution `u(x,y) = X(x) Y(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactSolution {
    pub x: Factor,
    pub y: Factor,
}

impl ExactSolution {
    /// `sin(πx) sin(πy)`
    pub const SIN_PI: ExactSolution = ExactSolution { x: Factor::Sin(PI), y: Factor::Sin(PI) };
    /// `sin(2πx) e^y`
    pub const SIN_2PI_EXP: ExactSolution = ExactSolution { x: Factor::Sin(2.0 * PI), y: Factor::Exp };

    pub fn derivative(&self, a: usize, b: usize, p: [f64; 2]) -> f64 {
        self.x.derivative(a, p[0]) * self.y.derivative(b, p[1])
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        self.derivative(0, 0, p)
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        [self.derivative(1, 0, p), self.derivative(0, 1, p)]
    }

    pub fn apply(&self, op: &DiffOp, p: [f64; 2]) -> f64 {
        op.terms.iter().map(|&(a, b, c)| c * self.derivative(a, b, p)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Forcing {
    /// `2π² sin(πx) sin(πy)`
    PoissonSinPi,
    /// `(4π² − 1) sin(2πx) e^y`
    PoissonSin2PiExp,
    /// `4π⁴ sin(πx) sin(πy)`
    BiharmonicSinPi,
    Constant(f64),
    Grf(GrfField),
}

impl Forcing {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        match self {
            Forcing::PoissonSinPi => 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin(),
            Forcing::PoissonSin2PiExp => (4.0 * PI * PI - 1.0) * (2.0 * PI * x).sin() * y.exp(),
            Forcing::BiharmonicSinPi => 4.0 * PI.powi(4) * (PI * x).sin() * (PI * y).sin(),
            Forcing::Constant(c) => *c,
            Forcing::Grf(g) => g.eval(p),
        }
    }
}

/// Interior operator `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InteriorOperator {
    /// `−Δu`
    NegLaplacian,
    /// `−∇·(ρ∇u) = −ρΔu − ∇ρ·∇u`
    Conservative(GrfField),
    /// `Δ²u`
    Bilaplacian,
}

/// A term `scale(x) · (op φ)(x)` of an operator with point-dependent
/// coefficients.
pub struct ScaledTerm {
    pub scale: Vec<f64>,
    pub op: DiffOp,
}

/// Problem parameters that appear as configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub alpha: f64,
    pub grf_seed: u64,
    pub rho_seed: u64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams { alpha: 32.0, grf_seed: 1, rho_seed: 2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub interior: InteriorOperator,
    pub forcing: Forcing,
    pub exact: Option<ExactSolution>,
    pub params: ProblemParams,
}

pub const PROBLEM_NAMES: [&str; 5] =
    ["poisson_sin2pi_exp", "poisson_sinpi", "poisson_grf", "varcoef_poisson", "biharmonic_sinpi"];

pub fn make_problem(name: &str, params: ProblemParams) -> Result<ProblemSpec> {
    let (kind, interior, forcing, exact) = match name {
        "poisson_sinpi" => (
            ProblemKind::Poisson,
            InteriorOperator::NegLaplacian,
            Forcing::PoissonSinPi,
            Some(ExactSolution::SIN_PI),
        ),
        "poisson_sin2pi_exp" => (
            ProblemKind::Poisson,
            InteriorOperator::NegLaplacian,
            Forcing::PoissonSin2PiExp,
            Some(ExactSolution::SIN_2PI_EXP),
        ),
        "poisson_grf" => (
            ProblemKind::Poisson,
            InteriorOperator::NegLaplacian,
            Forcing::Grf(sample_grf(params.alpha, params.grf_seed)?),
            None,
        ),
        "varcoef_poisson" => (
            ProblemKind::VariableCoefficientPoisson,
            InteriorOperator::Conservative(sample_grf(params.alpha, params.rho_seed)?),
            Forcing::Constant(1.0),
            None,
        ),
        "biharmonic_sinpi" => (
            ProblemKind::Biharmonic,
            InteriorOperator::Bilaplacian,
            Forcing::BiharmonicSinPi,
            Some(ExactSolution::SIN_PI),
        ),
        other => return Err(DdelmError::UnknownProblem(other.to_string())),
    };
    Ok(ProblemSpec { name: name.to_string(), kind, interior, forcing, exact, params })
}

impl ProblemSpec {
    /// Continuity (and flux) components per interface point.
    pub fn components(&self) -> usize {
        match self.kind {
            ProblemKind::Biharmonic => 2,
            _ => 1,
        }
    }

    /// `C`: Dirichlet trace, plus the trace of `Δu` for the biharmonic problem.
    pub fn continuity_ops(&self) -> Vec<DiffOp> {
        match self.kind {
            ProblemKind::Biharmonic => vec![DiffOp::identity(), DiffOp::laplacian()],
            _ => vec![DiffOp::identity()],
        }
    }

    /// `B`: same components as `C` on `∂Ω`.
    pub fn boundary_ops(&self) -> Vec<DiffOp> {
        self.continuity_ops()
    }

    /// `F` for each component along outward normal `n`.
    pub fn flux_ops(&self, n: [f64; 2]) -> Vec<DiffOp> {
        self.continuity_ops().iter().map(|c| c.directional(n)).collect()
    }

    /// Pointwise factor multiplying every flux row (conormal `ρ` for the
    /// variable-coefficient problem).
    pub fn flux_weight(&self, p: [f64; 2]) -> f64 {
        match &self.interior {
            InteriorOperator::Conservative(g) => eval_rho(g, p).0,
            _ => 1.0,
        }
    }

    pub fn max_order(&self) -> usize {
        match self.kind {
            ProblemKind::Biharmonic => 4,
            _ => 2,
        }
    }

    pub fn interior_terms(&self, points: &[[f64; 2]]) -> Vec<ScaledTerm> {
        let ones = || vec![1.0; points.len()];
        match &self.interior {
            InteriorOperator::NegLaplacian => vec![ScaledTerm { scale: ones(), op: DiffOp::laplacian().scaled(-1.0) }],
            InteriorOperator::Bilaplacian => vec![ScaledTerm { scale: ones(), op: DiffOp::bilaplacian() }],
            InteriorOperator::Conservative(g) => {
                let rho: Vec<(f64, [f64; 2])> = points.iter().map(|&p| eval_rho(g, p)).collect();
                vec![
                    ScaledTerm { scale: rho.iter().map(|r| -r.0).collect(), op: DiffOp::laplacian() },
                    ScaledTerm { scale: rho.iter().map(|r| -r.1[0]).collect(), op: DiffOp::derivative(1, 0) },
                    ScaledTerm { scale: rho.iter().map(|r| -r.1[1]).collect(), op: DiffOp::derivative(0, 1) },
                ]
            }
        }
    }

    pub fn forcing_at(&self, p: [f64; 2]) -> f64 {
        self.forcing.eval(p)
    }

    /// Boundary data for component `comp` (`g`, or `g₁`, `g₂`).
    pub fn boundary_value(&self, comp: usize, p: [f64; 2]) -> f64 {
        match self.exact {
            Some(u) => u.apply(&self.boundary_ops()[comp], p),
            None => 0.0,
        }
    }

    /// `L u` evaluated from the exact solution's analytic derivatives.
    pub fn apply_interior_to_exact(&self, p: [f64; 2]) -> Option<f64> {
        let u = self.exact?;
        Some(
            self.interior_terms(&[p])
                .iter()
                .map(|t| t.scale[0] * u.apply(&t.op, p))
                .sum(),
        )
    }
}
