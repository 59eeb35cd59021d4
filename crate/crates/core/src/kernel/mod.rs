//! The exact backstepping kernel `k = K(lambda)`.
//!
//! Two independent routes produce it: the marching scheme in [`fd`] and the
//! integral equation in characteristic coordinates in [`integral`]. The
//! residual report checks a field against its defining relations and the
//! a-priori bound `|k(x, y)| <= lambda_bar e^(2 lambda_bar x)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{KernelField, ReactionProfile};

pub mod fd;
pub mod integral;
mod inverse;
mod residual;

pub use fd::{solve_kernel_fd, solve_kernel_fd_with, NearDiagonalRule};
pub use integral::{solve_kernel_integral, solve_kernel_integral_detailed, IntegralSolution};
pub use inverse::inverse_kernel;
pub(crate) use inverse::volterra_apply;
pub use residual::{kernel_residuals, KernelResidualReport};
pub(crate) use residual::{interior_nodes, pde_operator_at};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    FdMarching,
    IntegralFixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoursatSolveOptions {
    pub n_points: usize,
    pub method: SolveMethod,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for GoursatSolveOptions {
    fn default() -> Self {
        Self {
            n_points: 101,
            method: SolveMethod::FdMarching,
            max_iters: 500,
            tol: 1e-12,
        }
    }
}

impl GoursatSolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters < 1 || self.n_points < 3 {
            return Err(invalid("solve options need tol > 0, max_iters >= 1, n_points >= 3"));
        }
        Ok(())
    }
}

/// Dispatch on [`GoursatSolveOptions::method`].
pub fn solve_kernel(lambda: &ReactionProfile, opts: &GoursatSolveOptions) -> Result<KernelField> {
    opts.validate()?;
    match opts.method {
        SolveMethod::FdMarching => solve_kernel_fd(lambda, opts.n_points),
        SolveMethod::IntegralFixedPoint => {
            solve_kernel_integral(lambda, opts.n_points, opts.max_iters, opts.tol)
        }
    }
}
