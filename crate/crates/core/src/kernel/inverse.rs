use crate::error::{Error, Result};
use crate::grid::{trapezoid_unchecked, KernelField};

/// Kernel `l` of the inverse transform `u = w + int_0^x l(x, y) w(y) dy`.
///
/// Picard iteration on `l(x, y) = k(x, y) + int_y^x k(x, s) l(s, y) ds`,
/// starting from `l = 0`, stopped once the sup change is below `tol`.
pub fn inverse_kernel(k: &KernelField, max_iters: usize, tol: f64) -> Result<KernelField> {
    let grid = k.grid();
    let n = grid.n_points();
    let h = grid.spacing();
    let mut l = KernelField::zeros(grid);
    let mut buf = Vec::with_capacity(n);
    let mut last_change = f64::NAN;
    for _ in 0..max_iters {
        let mut next = KernelField::zeros(grid);
        let mut change = 0.0_f64;
        for i in 0..n {
            let krow = k.row(i);
            for j in 0..=i {
                buf.clear();
                buf.extend((j..=i).map(|s| krow[s] * l.get(s, j)));
                let v = krow[j] + trapezoid_unchecked(&buf, h);
                change = change.max((v - l.get(i, j)).abs());
                next.set(i, j, v);
            }
        }
        l = next;
        last_change = change;
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(l);
        }
    }
    Err(Error::Convergence {
        iters: max_iters,
        last_change,
    })
}

/// `w(x) = u(x) - int_0^x k(x, y) u(y) dy`, or with `sign = 1` the forward
/// form `u + int l u` used by the inverse transform.
pub(crate) fn volterra_apply(k: &KernelField, u: &[f64], sign: f64) -> Vec<f64> {
    let h = k.grid().spacing();
    let mut buf = Vec::with_capacity(u.len());
    (0..u.len())
        .map(|i| {
            buf.clear();
            buf.extend(k.row(i).iter().zip(u).map(|(a, b)| a * b));
            u[i] + sign * trapezoid_unchecked(&buf, h)
        })
        .collect()
}
