//! Marching finite-difference scheme for the Goursat kernel problem
//!
//! ```text
//! k_xx - k_yy = lambda(y) k,   k(x, 0) = 0,   k(x, x) = -1/2 int_0^x lambda
//! ```
//!
//! Rows (fixed `x_i`) are produced one after another with the diamond stencil
//! centred at `(x_i, y_j)`:
//!
//! ```text
//! k(i+1, j) = -k(i-1, j) + k(i, j+1) + k(i, j-1)
//!             + h^2 lambda_j (k(i, j+1) + k(i, j-1)) / 2
//! ```
//!
//! The diagonal is the trapezoid accumulation
//! `k(i+1, i+1) = k(i, i) - h/4 (lambda_i + lambda_(i+1))` and the first column
//! is zero. The node right below the diagonal, `(i+1, i)`, needs special
//! treatment because its stencil reaches above the diagonal; see
//! [`NearDiagonalRule`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{KernelField, ReactionProfile, UniformGrid1D};

/// How the first sub-diagonal node of each new row is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearDiagonalRule {
    /// Diamond stencil with ghost values above the diagonal set to
    /// `k(x_i, y_(i+1)) = k(x_i, x_i) + h/2 lambda_i`, the commonly quoted
    /// form of the scheme. Kept for comparison: its local error contains an
    /// `h^2 lambda'` term that makes it first order with a large constant, and
    /// it misses the 2% cross-solver target for the steep Chebyshev profiles.
    Literal,
    /// Integrate `G_xi_eta = lambda G / 4` exactly over the half cell between
    /// the diagonal and the sub-diagonal in characteristic coordinates. The
    /// diagonal values at half steps come from the boundary condition.
    #[default]
    Characteristic,
}

/// Solve the kernel with the default near-diagonal rule.
pub fn solve_kernel_fd(lambda: &ReactionProfile, n_points: usize) -> Result<KernelField> {
    solve_kernel_fd_with(lambda, n_points, NearDiagonalRule::default())
}

pub fn solve_kernel_fd_with(
    lambda: &ReactionProfile,
    n_points: usize,
    rule: NearDiagonalRule,
) -> Result<KernelField> {
    let grid = UniformGrid1D::new(n_points)?;
    let lambda = lambda.resample(grid)?;
    let lam = lambda.values();
    if lam.iter().any(|v| !v.is_finite()) {
        return Err(invalid("reaction coefficient has non-finite entries"));
    }
    let n = grid.n_points();
    let h = grid.spacing();
    let h2 = h * h;
    let mut k = KernelField::zeros(grid);
    let vals = k.values_mut();

    // diagonal, accumulated the same way as the trapezoid rule
    let mut diag = vec![0.0; n];
    let mut acc = 0.0;
    for i in 1..n {
        acc += 0.5 * h * (lam[i - 1] + lam[i]);
        diag[i] = -0.5 * acc;
    }

    let mut prev: Vec<f64> = vec![0.0; 1]; // row i - 1
    let mut cur: Vec<f64> = vec![0.0, diag[1]]; // row i
    vals[1] = 0.0;
    vals[2] = diag[1];
    for i in 1..n - 1 {
        let mut next = vec![0.0; i + 2];
        next[i + 1] = diag[i + 1];
        for j in 1..i {
            let north = cur[j + 1];
            let south = cur[j - 1];
            next[j] = -prev[j] + north + south + h2 * lam[j] * 0.5 * (north + south);
        }
        next[i] = match rule {
            NearDiagonalRule::Literal => {
                let north = cur[i] + 0.5 * h * lam[i];
                let west = prev[i - 1] + 0.5 * h * lam[i - 1];
                let south = cur[i - 1];
                -west + north + south + h2 * lam[i] * 0.5 * (north + south)
            }
            NearDiagonalRule::Characteristic => {
                // half-step diagonal values D(x_i -+ h/2) for piecewise-linear lambda
                let d_lo = diag[i] + h / 16.0 * (lam[i - 1] + 3.0 * lam[i]);
                let d_hi = diag[i] - h / 16.0 * (3.0 * lam[i] + lam[i + 1]);
                let south = cur[i - 1];
                // lambda at the cell centre y = x_i - h/4
                let lam_c = 0.75 * lam[i] + 0.25 * lam[i - 1];
                let s = h2 * lam_c / 8.0;
                (south + (d_hi - d_lo) + s * (south + d_lo + d_hi)) / (1.0 - s)
            }
        };
        let start = (i + 1) * (i + 2) / 2;
        vals[start..start + i + 2].copy_from_slice(&next);
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(k)
}
