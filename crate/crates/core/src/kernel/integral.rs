//! Successive approximation of the kernel in characteristic coordinates.
//!
//! With `xi = x + y`, `eta = x - y` and `G(xi, eta) = k(x, y)` the kernel
//! problem becomes the integral equation
//!
//! ```text
//! G(xi, eta) = -1/4 int_eta^xi lambda(s/2) ds
//!              + 1/4 int_eta^xi int_0^eta lambda((sigma - s)/2) G(sigma, s) ds dsigma
//! ```
//!
//! on `{0 <= eta <= xi <= 1} U {1 <= xi <= 2 - eta <= 2}`. The `(xi, eta)`
//! grid has the same spacing `h` as the `(x, y)` grid; nodes with `xi/h` and
//! `eta/h` of equal parity are exactly the `(x, y)` nodes, the others sit at
//! half-integer `x`. `lambda` is linearly interpolated at half steps.
//!
//! The double integral is evaluated in two cumulative trapezoid sweeps, first
//! in `s` for every `sigma`, then in `sigma` for every `eta`, so one Picard
//! iteration costs `O(n^2)`.

use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, KernelField, ReactionProfile, UniformGrid1D};

#[derive(Debug, Clone)]
pub struct IntegralSolution {
    pub kernel: KernelField,
    pub iterations: usize,
    /// Sup-norm change between consecutive iterates, first entry is the
    /// change from the zero initial guess.
    pub changes: Vec<f64>,
}

pub fn solve_kernel_integral(
    lambda: &ReactionProfile,
    n_points: usize,
    max_iters: usize,
    tol: f64,
) -> Result<KernelField> {
    solve_kernel_integral_detailed(lambda, n_points, max_iters, tol).map(|s| s.kernel)
}

/// Storage for `G` on the characteristic grid, column `a` (`xi = a h`)
/// holding `eta = 0..=min(a, 2m - a)`.
struct CharGrid {
    m: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl CharGrid {
    fn new(m: usize) -> Self {
        let mut offsets = Vec::with_capacity(2 * m + 2);
        let mut total = 0;
        for a in 0..=2 * m {
            offsets.push(total);
            total += Self::height(m, a) + 1;
        }
        offsets.push(total);
        Self {
            m,
            offsets,
            data: vec![0.0; total],
        }
    }

    #[inline]
    fn height(m: usize, a: usize) -> usize {
        a.min(2 * m - a)
    }

    #[inline]
    fn col(&self, a: usize) -> &[f64] {
        &self.data[self.offsets[a]..self.offsets[a + 1]]
    }

    #[inline]
    fn col_mut(&mut self, a: usize) -> &mut [f64] {
        let (s, e) = (self.offsets[a], self.offsets[a + 1]);
        &mut self.data[s..e]
    }
}

/// Run the Picard iteration from the zero field and keep the change history.
pub fn solve_kernel_integral_detailed(
    lambda: &ReactionProfile,
    n_points: usize,
    max_iters: usize,
    tol: f64,
) -> Result<IntegralSolution> {
    if !(tol > 0.0) || max_iters == 0 {
        return Err(crate::error::invalid("need tol > 0 and max_iters >= 1"));
    }
    let grid = UniformGrid1D::new(n_points)?;
    let lambda = lambda.resample(grid)?;
    let lam = lambda.values();
    let m = n_points - 1;
    let h = grid.spacing();

    // lambda(c h / 2), c = 0..=2m
    let lam_half: Vec<f64> = (0..=2 * m)
        .map(|c| {
            if c % 2 == 0 {
                lam[c / 2]
            } else {
                0.5 * (lam[c / 2] + lam[c / 2 + 1])
            }
        })
        .collect();
    let cum = cumulative_trapezoid(&lam_half, h);

    // free term -1/4 int_eta^xi lambda(s/2) ds
    let mut free = CharGrid::new(m);
    for a in 0..=2 * m {
        let col = free.col_mut(a);
        for (b, v) in col.iter_mut().enumerate() {
            *v = -0.25 * (cum[a] - cum[b]);
        }
    }

    let mut g = CharGrid::new(m);
    let mut inner = CharGrid::new(m); // H(sigma, eta) = int_0^eta lambda G ds
    let mut next = CharGrid::new(m);
    let mut changes = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        for a in 0..=2 * m {
            let gcol = g.col(a);
            let mut acc = 0.0;
            let mut prev = lam_half[a] * gcol[0];
            let hcol_len = gcol.len();
            let mut hvals = vec![0.0; hcol_len];
            for b in 1..hcol_len {
                let cur = lam_half[a - b] * gcol[b];
                acc += 0.5 * h * (prev + cur);
                hvals[b] = acc;
                prev = cur;
            }
            inner.col_mut(a).copy_from_slice(&hvals);
        }
        // next(a, b) = free(a, b) + 1/4 int_{b}^{a} H(sigma, b) dsigma
        let mut running = vec![0.0; m + 1]; // per eta index b
        let mut last_h = vec![0.0; m + 1];
        let mut change = 0.0_f64;
        for a in 0..=2 * m {
            let height = CharGrid::height(m, a);
            let hcol = inner.col(a);
            for b in 0..=height {
                let hv = hcol[b];
                if a == b {
                    running[b] = 0.0;
                } else {
                    running[b] += 0.5 * h * (last_h[b] + hv);
                }
                last_h[b] = hv;
            }
            let fcol = free.col(a);
            let gcol = g.col(a);
            let ncol = next.col_mut(a);
            for b in 0..=height {
                let v = fcol[b] + 0.25 * running[b];
                change = change.max((v - gcol[b]).abs());
                ncol[b] = v;
            }
        }
        std::mem::swap(&mut g, &mut next);
        changes.push(change);
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            let kernel = to_kernel(&g, grid);
            return Ok(IntegralSolution {
                kernel,
                iterations,
                changes,
            });
        }
    }
    Err(Error::Convergence {
        iters: iterations,
        last_change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

fn to_kernel(g: &CharGrid, grid: UniformGrid1D) -> KernelField {
    debug_assert_eq!(g.m + 1, grid.n_points());
    KernelField::from_values(
        grid,
        (0..grid.n_points())
            .flat_map(|i| (0..=i).map(move |j| (i, j)))
            .map(|(i, j)| g.col(i + j)[i - j])
            .collect(),
    )
    .expect("triangle size is fixed by the grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> UniformGrid1D {
        UniformGrid1D::new(n).unwrap()
    }

    #[test]
    fn zero_lambda() {
        let lam = ReactionProfile::constant(grid(31), 0.0).unwrap();
        let s = solve_kernel_integral_detailed(&lam, 31, 10, 1e-12).unwrap();
        assert!(s.kernel.values().iter().all(|&v| v == 0.0));
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn first_iterate_is_analytic() {
        // with one iteration from zero, k_1(x, y) = -(c/2) y
        let c = 3.0;
        let n = 21;
        let lam = ReactionProfile::constant(grid(n), c).unwrap();
        let err = solve_kernel_integral_detailed(&lam, n, 1, 1e-300).unwrap_err();
        assert!(matches!(err, Error::Convergence { iters: 1, .. }));
        // rerun capturing the field through a loose tolerance
        let s = solve_kernel_integral_detailed(&lam, n, 1, 1e3).unwrap();
        let g = grid(n);
        for i in 0..n {
            for j in 0..=i {
                let want = -0.5 * c * g.node(j);
                assert!((s.kernel.get(i, j) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn contraction_self_consistency() {
        let n = 101;
        let lam = ReactionProfile::constant(grid(n), 4.0).unwrap();
        let a = solve_kernel_integral_detailed(&lam, n, 500, 1e-10).unwrap();
        let tail = &a.changes[1..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]), "{:?}", a.changes);
        let b = solve_kernel_integral_detailed(&lam, n, 500, 1e-15).unwrap();
        assert!(b.iterations >= a.iterations);
        let diff = a
            .kernel
            .values()
            .iter()
            .zip(b.kernel.values())
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff <= 1e-9, "diff {diff}");
    }

    #[test]
    fn diagonal_and_first_column() {
        let n = 81;
        let lam = ReactionProfile::chebyshev(grid(n), 50.0, 8.0).unwrap();
        let k = solve_kernel_integral(&lam, n, 200, 1e-12).unwrap();
        let cum = cumulative_trapezoid(lam.values(), grid(n).spacing());
        for i in 0..n {
            assert!(k.get(i, 0).abs() <= 1e-12);
            assert!((k.get(i, i) + 0.5 * cum[i]).abs() <= 1e-12);
        }
    }
}
