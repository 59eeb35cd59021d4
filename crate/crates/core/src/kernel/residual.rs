use serde::{Deserialize, Serialize};

use crate::grid::{cumulative_trapezoid, KernelField, ReactionProfile};
use crate::error::Result;

/// How well a kernel satisfies its defining relations on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelResidualReport {
    /// `sup |k_xx - k_yy - lambda(y) k|` over interior nodes at least two
    /// steps away from the boundary, the first column and the diagonal.
    pub pde_residual_sup: f64,
    /// `sup |k(x, 0)|`.
    pub bc_zero_sup: f64,
    /// `sup |k(x, x) + 1/2 int_0^x lambda|`.
    pub bc_diag_sup: f64,
    /// `min (lambda_bar e^(2 lambda_bar x) - |k(x, y)|)`; negative means the
    /// a-priori kernel bound is violated.
    pub bound_margin: f64,
}

/// Centered second differences `(k_xx - k_yy)(x_i, y_j) - lambda_j k(x_i, y_j)`.
///
/// Only defined for `2 <= j <= i - 2`, `i <= n - 2`.
#[inline]
pub(crate) fn pde_operator_at(k: &KernelField, lam: &[f64], inv_h2: f64, i: usize, j: usize) -> f64 {
    let c = k.get(i, j);
    let kxx = k.get(i + 1, j) - 2.0 * c + k.get(i - 1, j);
    let kyy = k.get(i, j + 1) - 2.0 * c + k.get(i, j - 1);
    (kxx - kyy) * inv_h2 - lam[j] * c
}

pub(crate) fn interior_nodes(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (4..n.saturating_sub(1)).flat_map(|i| (2..=i - 2).map(move |j| (i, j)))
}

pub fn kernel_residuals(k: &KernelField, lambda: &ReactionProfile) -> Result<KernelResidualReport> {
    let grid = k.grid();
    grid.check_same(&lambda.grid())?;
    let n = grid.n_points();
    let h = grid.spacing();
    let lam = lambda.values();
    let inv_h2 = 1.0 / (h * h);

    let pde_residual_sup = interior_nodes(n)
        .map(|(i, j)| pde_operator_at(k, lam, inv_h2, i, j).abs())
        .fold(0.0_f64, f64::max);
    let bc_zero_sup = (0..n).map(|i| k.get(i, 0).abs()).fold(0.0_f64, f64::max);
    let cum = cumulative_trapezoid(lam, h);
    let bc_diag_sup = (0..n)
        .map(|i| (k.get(i, i) + 0.5 * cum[i]).abs())
        .fold(0.0_f64, f64::max);
    let lbar = lambda.sup_norm();
    let mut bound_margin = f64::INFINITY;
    for i in 0..n {
        let bound = lbar * (2.0 * lbar * grid.node(i)).exp();
        for &v in k.row(i) {
            bound_margin = bound_margin.min(bound - v.abs());
        }
    }
    Ok(KernelResidualReport {
        pde_residual_sup,
        bc_zero_sup,
        bc_diag_sup,
        bound_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid1D;
    use crate::kernel::solve_kernel_fd;

    fn grid(n: usize) -> UniformGrid1D {
        UniformGrid1D::new(n).unwrap()
    }

    #[test]
    fn zero_lambda_zero_residuals() {
        let lam = ReactionProfile::constant(grid(21), 0.0).unwrap();
        let k = solve_kernel_fd(&lam, 21).unwrap();
        let r = kernel_residuals(&k, &lam).unwrap();
        assert_eq!(r.pde_residual_sup, 0.0);
        assert_eq!(r.bc_zero_sup, 0.0);
        assert_eq!(r.bc_diag_sup, 0.0);
    }

    #[test]
    fn first_column_readout() {
        let lam = ReactionProfile::chebyshev(grid(21), 5.0, 3.0).unwrap();
        let mut k = solve_kernel_fd(&lam, 21).unwrap();
        for i in 1..21 {
            k.set(i, 0, 0.1);
        }
        let r = kernel_residuals(&k, &lam).unwrap();
        assert!((r.bc_zero_sup - 0.1).abs() < 1e-15);
    }

    #[test]
    fn residual_is_second_order() {
        let res = |n: usize| {
            let lam = ReactionProfile::from_fn(grid(n), |x| 10.0 * (3.0 * x).cos()).unwrap();
            let k = solve_kernel_fd(&lam, n).unwrap();
            kernel_residuals(&k, &lam).unwrap().pde_residual_sup
        };
        let ratio = res(51) / res(101);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn grid_mismatch_rejected() {
        let lam = ReactionProfile::constant(grid(21), 1.0).unwrap();
        let k = KernelField::zeros(grid(11));
        assert!(kernel_residuals(&k, &lam).is_err());
    }
}
