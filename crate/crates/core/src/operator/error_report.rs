//! Approximation error of a learned kernel in the functionals that enter the
//! stability certificate.

use serde::{Deserialize, Serialize};

use super::deeponet::{relative_l2, DeepOperatorModel};
use crate::error::Result;
use crate::grid::{KernelField, ReactionProfile};
use crate::kernel::{interior_nodes, pde_operator_at};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorErrorReport {
    /// `sup |k - k_hat|`.
    pub kernel_sup_err: f64,
    /// `sup |2 d/dx (k(x, x) - k_hat(x, x))|`.
    pub diag_deriv_err: f64,
    /// `sup |(d_xx - d_yy)(k - k_hat) - lambda(y)(k - k_hat)|` on interior nodes.
    pub pde_functional_err: f64,
    /// Sum of the three functionals.
    pub epsilon: f64,
    pub rel_l2: f64,
}

/// Derivative of nodal values: centered inside, second-order one-sided at
/// both ends.
pub(crate) fn nodal_derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Error functionals of `approx` against `exact` on their shared grid.
pub fn kernel_error_report(
    approx: &KernelField,
    exact: &KernelField,
    lambda: &ReactionProfile,
) -> Result<OperatorErrorReport> {
    let grid = exact.grid();
    grid.check_same(&lambda.grid())?;
    let diff = approx.sub(exact)?;
    let h = grid.spacing();
    let kernel_sup_err = diff.sup_norm();
    let diag_deriv_err = nodal_derivative(&diff.diagonal(), h)
        .iter()
        .fold(0.0_f64, |m, d| m.max(2.0 * d.abs()));
    let inv_h2 = 1.0 / (h * h);
    let pde_functional_err = interior_nodes(grid.n_points())
        .map(|(i, j)| pde_operator_at(&diff, lambda.values(), inv_h2, i, j).abs())
        .fold(0.0_f64, f64::max);
    Ok(OperatorErrorReport {
        kernel_sup_err,
        diag_deriv_err,
        pde_functional_err,
        epsilon: kernel_sup_err + diag_deriv_err + pde_functional_err,
        rel_l2: relative_l2(approx.values(), exact.values()),
    })
}

/// [`kernel_error_report`] for the model's prediction on `exact`'s grid.
pub fn operator_error(
    model: &DeepOperatorModel,
    lambda: &ReactionProfile,
    exact: &KernelField,
) -> Result<OperatorErrorReport> {
    let approx = model.predict_kernel(lambda, exact.grid().n_points())?;
    kernel_error_report(&approx, exact, lambda)
}
