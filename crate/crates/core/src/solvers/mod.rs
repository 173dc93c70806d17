//! Equality-constrained sparse recovery, `min R(x) s.t. Ax = b`.
//!
//! All three regularizers share one inner splitting loop:
//!
//! ```text
//! x_{i+1} = (A^T A + I)^{-1} (A^T b + y_i + (z - u_i - A^T v_i) / delta)
//! y_{i+1} = shrink(x_{i+1} + u_i / delta, tau)
//! u_{i+1} = u_i + delta (x_{i+1} - y_{i+1})
//! v_{i+1} = v_i + delta (A x_{i+1} - b)
//! ```
//!
//! where `z` is the linearization of the concave part at the current outer
//! iterate and `tau` the l1 weight divided by `delta`.

mod dca;
mod normal;

pub use dca::{adaptive_dca_tl1, dca_tl1, l12_dca, l1_basis_pursuit, min_norm_solution};
pub use normal::NormalSystem;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::penalty::PenaltyParam;

/// Magnitude above which a coefficient counts as nonzero.
pub const SPARSITY_THRESHOLD: f64 = 1e-6;

/// Candidate `a` values for adaptive TL1 in low dimension.
pub const LOW_DIM_CANDIDATES: [f64; 3] = [0.2, 0.3, 1.0];
/// Candidate `a` values for adaptive TL1 in high dimension.
pub const HIGH_DIM_CANDIDATES: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 1.0];
/// Default `a` for sparse recovery.
pub const DEFAULT_A: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Tl1,
    AdaptiveTl1,
    L1,
    L1Minus2,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Tl1, Method::AdaptiveTl1, Method::L1, Method::L1Minus2];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Tl1 => "TL1",
            Method::AdaptiveTl1 => "adaptiveTL1",
            Method::L1 => "L1",
            Method::L1Minus2 => "L1minus2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tl1" => Ok(Method::Tl1),
            "adaptivetl1" | "adaptive-tl1" | "adaptive_tl1" => Ok(Method::AdaptiveTl1),
            "l1" => Ok(Method::L1),
            "l1minus2" | "l1-2" | "l12" | "l1_2" => Ok(Method::L1Minus2),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps_outer: f64,
    pub eps_inner: f64,
    /// Augmented Lagrangian penalty.
    pub delta: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// TL1 shape parameter; ignored by the l1 and l1-2 solvers.
    pub a: PenaltyParam,
    /// Factor `A^T A + I` once per call instead of on every inner step.
    /// Both paths produce identical bits.
    pub cache_factorization: bool,
    pub init: Init,
}

/// Choice of the first nonzero outer iterate `x^1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Minimum-norm least-squares solution of `Ax = b`.
    LeastSquares,
    /// Basis pursuit solution, i.e. one DCA step linearized at `x^0 = 0`.
    L1,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_outer: 1e-5,
            eps_inner: 1e-6,
            delta: 10.0,
            max_outer: 50,
            max_inner: 5000,
            a: PenaltyParam::new(DEFAULT_A).expect("default a is positive"),
            cache_factorization: true,
            init: Init::LeastSquares,
        }
    }
}

impl SolverConfig {
    pub fn with_a(mut self, a: f64) -> Result<Self> {
        self.a = PenaltyParam::new(a)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.eps_outer, "eps_outer")?;
        positive(self.eps_inner, "eps_inner")?;
        positive(self.delta, "delta")?;
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        if self.delta < 1.0 {
            log::warn!("delta = {} is small; the splitting expects delta >> 1", self.delta);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x: DVector<f64>,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub converged: bool,
    /// `||Ax - b||_2` of the returned `x`.
    pub residual: f64,
    /// Number of entries with `|x_i| > 1e-6`.
    pub sparsity: usize,
    pub method: Method,
    pub a_used: Option<f64>,
    /// Regularizer value at each outer iterate `x^1, x^2, ...`.
    pub objective_trace: Vec<f64>,
}

pub fn sparsity(x: &[f64]) -> usize {
    x.iter().filter(|v| v.abs() > SPARSITY_THRESHOLD).count()
}
