//! Grid containers, quadrature, norms and interpolation shared by the solvers,
//! the operator and the simulator.
//!
//! Every spatial field lives on a uniform grid of `[0, 1]`. Kernels live on
//! the lower triangle `0 <= y <= x <= 1` of the tensor grid and are stored
//! row-major: row `i` (fixed `x_i`) holds `k(x_i, y_0..=y_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform grid `x_i = i h`, `i = 0..n`, with `h = 1 / (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformGrid1D {
    n_points: usize,
}

impl UniformGrid1D {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(invalid(format!("grid needs at least 3 points, got {n_points}")));
        }
        Ok(Self { n_points })
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        // exact at both ends
        if i + 1 == self.n_points {
            1.0
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Number of nodes in the lower triangle, `n (n + 1) / 2`.
    #[inline]
    pub fn triangle_len(&self) -> usize {
        self.n_points * (self.n_points + 1) / 2
    }

    pub(crate) fn check_same(&self, other: &UniformGrid1D) -> Result<()> {
        if self.n_points != other.n_points {
            return Err(Error::GridMismatch(self.n_points, other.n_points));
        }
        Ok(())
    }
}

/// Offset of node `(i, j)`, `j <= i`, in row-major triangle storage.
#[inline]
pub fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// A sampled reaction coefficient `lambda(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionProfile {
    grid: UniformGrid1D,
    values: Vec<f64>,
    sup_norm: f64,
}

impl ReactionProfile {
    pub fn new(grid: UniformGrid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch(grid.n_points(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("reaction coefficient has non-finite entries"));
        }
        let sup_norm = sup_norm(&values)?;
        Ok(Self {
            grid,
            values,
            sup_norm,
        })
    }

    pub fn from_fn(grid: UniformGrid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: UniformGrid1D, c: f64) -> Result<Self> {
        Self::from_fn(grid, |_| c)
    }

    /// `c cos(gamma acos x)`, the Chebyshev-type family used throughout.
    pub fn chebyshev(grid: UniformGrid1D, amplitude: f64, gamma: f64) -> Result<Self> {
        Self::from_fn(grid, |x| amplitude * (gamma * x.clamp(-1.0, 1.0).acos()).cos())
    }

    #[inline]
    pub fn grid(&self) -> UniformGrid1D {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_i |lambda(x_i)|`.
    #[inline]
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Piecewise-linear evaluation at an arbitrary `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        interp_linear(&self.values, self.grid.spacing(), x)
    }

    /// Resample onto another uniform grid by linear interpolation.
    pub fn resample(&self, grid: UniformGrid1D) -> Result<Self> {
        if grid == self.grid {
            return Ok(self.clone());
        }
        Self::from_fn(grid, |x| self.eval(x))
    }
}

/// Kernel `k(x_i, y_j)` on the lower triangle of the tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelField {
    grid: UniformGrid1D,
    values: Vec<f64>,
}

impl KernelField {
    pub fn zeros(grid: UniformGrid1D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.triangle_len()],
        }
    }

    pub fn from_values(grid: UniformGrid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.triangle_len() {
            return Err(Error::Structural(format!(
                "kernel needs {} triangle values, got {}",
                grid.triangle_len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: UniformGrid1D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.triangle_len());
        for i in 0..grid.n_points() {
            let x = grid.node(i);
            for j in 0..=i {
                values.push(f(x, grid.node(j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> UniformGrid1D {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[tri_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[tri_index(i, j)] = v;
    }

    /// Row `i`: `k(x_i, y_0..=y_i)`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = tri_index(i, 0);
        &self.values[start..start + i + 1]
    }

    /// The gain row `k(1, y)` used by the feedback law and the observer.
    pub fn gain_row(&self) -> &[f64] {
        self.row(self.grid.n_points() - 1)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.n_points()).map(|i| self.get(i, i)).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &KernelField) -> Result<KernelField> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(KernelField {
            grid: self.grid,
            values,
        })
    }
}

/// Spatial state `u(., t)` of the plant or the observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeState {
    pub grid: UniformGrid1D,
    pub u: Vec<f64>,
    pub t: f64,
}

impl PdeState {
    pub fn new(grid: UniformGrid1D, u: Vec<f64>, t: f64) -> Result<Self> {
        if u.len() != grid.n_points() {
            return Err(Error::GridMismatch(grid.n_points(), u.len()));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(invalid("state has non-finite entries"));
        }
        Ok(Self { grid, u, t })
    }

    pub fn from_fn(grid: UniformGrid1D, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            u: grid.nodes().into_iter().map(f).collect(),
            t: 0.0,
        }
    }
}

/// Composite trapezoid rule on equispaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(invalid("trapezoid needs at least 2 samples"));
    }
    Ok(trapezoid_unchecked(values, h))
}

#[inline]
pub(crate) fn trapezoid_unchecked(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (0.5 * (values[0] + values[n - 1]) + inner)
        }
    }
}

/// Running trapezoid integral, `out[i] = int_0^{x_i}`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// `sqrt(int_0^1 u^2 dx)` by the trapezoid rule.
pub fn l2_norm(state: &PdeState) -> f64 {
    l2_norm_values(&state.u, state.grid.spacing())
}

#[inline]
pub(crate) fn l2_norm_values(u: &[f64], h: f64) -> f64 {
    let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
    trapezoid_unchecked(&sq, h).sqrt()
}

pub fn sup_norm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("sup norm of an empty array"));
    }
    Ok(values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Linear interpolation of equispaced samples on `[0, 1]`.
pub(crate) fn interp_linear(values: &[f64], h: f64, x: f64) -> f64 {
    let last = values.len() - 1;
    let s = (x / h).clamp(0.0, last as f64);
    let i = (s.floor() as usize).min(last - 1);
    let w = s - i as f64;
    (1.0 - w) * values[i] + w * values[i + 1]
}

/// Interpolate a kernel at an off-grid point of the triangle.
///
/// Cells strictly below the diagonal are bilinear. Cells cut by the diagonal
/// only keep their lower half, which is interpolated linearly on the triangle
/// `(i, i), (i + 1, i), (i + 1, i + 1)`.
pub fn triangle_interpolate(field: &KernelField, x: f64, y: f64) -> Result<f64> {
    let tol = 1e-12;
    if !(x.is_finite() && y.is_finite()) || y < -tol || x > 1.0 + tol || y > x + tol {
        return Err(Error::Domain { x, y });
    }
    let n = field.grid.n_points();
    let h = field.grid.spacing();
    let x = x.clamp(0.0, 1.0);
    let y = y.clamp(0.0, x);
    let sx = x / h;
    let sy = y / h;
    let i = (sx.floor() as usize).min(n - 2);
    let j = (sy.floor() as usize).min(i);
    let a = (sx - i as f64).clamp(0.0, 1.0);
    let b = (sy - j as f64).clamp(0.0, 1.0);
    if j < i {
        let k00 = field.get(i, j);
        let k10 = field.get(i + 1, j);
        let k01 = field.get(i, j + 1);
        let k11 = field.get(i + 1, j + 1);
        Ok((1.0 - a) * (1.0 - b) * k00 + a * (1.0 - b) * k10 + (1.0 - a) * b * k01 + a * b * k11)
    } else {
        // diagonal cell, b <= a
        let b = b.min(a);
        let k00 = field.get(i, i);
        let k10 = field.get(i + 1, i);
        let k11 = field.get(i + 1, i + 1);
        Ok((1.0 - a) * k00 + (a - b) * k10 + b * k11)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> UniformGrid1D {
        UniformGrid1D::new(n).unwrap()
    }

    #[test]
    fn grid_spans_unit_interval() {
        for n in [3, 11, 101, 257] {
            let g = grid(n);
            assert_eq!(g.node(0), 0.0);
            assert_eq!(g.node(n - 1), 1.0);
            assert!((g.spacing() * (n - 1) as f64 - 1.0).abs() < 1e-15);
        }
        assert!(UniformGrid1D::new(2).is_err());
    }

    #[test]
    fn trapezoid_examples() {
        let g = grid(11);
        assert_eq!(trapezoid(&[1.0; 11], 0.1).unwrap(), 1.0);
        assert!((trapezoid(&g.nodes(), 0.1).unwrap() - 0.5).abs() < 1e-15);
        let g = grid(101);
        let sq: Vec<f64> = g.nodes().iter().map(|x| x * x).collect();
        assert!((trapezoid(&sq, g.spacing()).unwrap() - 1.0 / 3.0).abs() < 1e-4);
        assert!(trapezoid(&[1.0], 0.1).is_err());
    }

    #[test]
    fn trapezoid_second_order() {
        // Richardson: halving h quarters the error on x^2
        let err = |n: usize| {
            let g = grid(n);
            let sq: Vec<f64> = g.nodes().iter().map(|x| x * x).collect();
            (trapezoid(&sq, g.spacing()).unwrap() - 1.0 / 3.0).abs()
        };
        let ratio = err(51) / err(101);
        assert!((ratio - 4.0).abs() < 1e-6, "ratio {ratio}");
    }

    #[test]
    fn l2_norm_examples() {
        let g = grid(101);
        assert_eq!(l2_norm(&PdeState::from_fn(g, |_| 0.0)), 0.0);
        assert!((l2_norm(&PdeState::from_fn(g, |_| 1.0)) - 1.0).abs() < 1e-14);
        let s = PdeState::from_fn(g, |x| (std::f64::consts::PI * x).sin());
        assert!((l2_norm(&s) - 0.5_f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(sup_norm(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(sup_norm(&[-3.0, 2.0]).unwrap(), 3.0);
        assert!(sup_norm(&[]).is_err());
        let lam = ReactionProfile::chebyshev(grid(101), 20.0, 5.0).unwrap();
        assert!((lam.sup_norm() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn reaction_profile_rejects_nan() {
        assert!(ReactionProfile::new(grid(3), vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(ReactionProfile::new(grid(3), vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let g = grid(11);
        let k = KernelField::from_fn(g, |x, y| x * x + 3.0 * y - x * y);
        assert!((triangle_interpolate(&k, 0.5, 0.3).unwrap() - k.get(5, 3)).abs() < 1e-14);
        let c = KernelField::from_fn(g, |_, _| 2.5);
        for (x, y) in [(0.33, 0.12), (0.77, 0.77), (1.0, 0.05), (0.051, 0.0)] {
            assert!((triangle_interpolate(&c, x, y).unwrap() - 2.5).abs() < 1e-14);
        }
        // edge midpoints, interior and on the diagonal
        let mid = triangle_interpolate(&k, 0.55, 0.3).unwrap();
        assert!((mid - 0.5 * (k.get(5, 3) + k.get(6, 3))).abs() < 1e-14);
        let mid = triangle_interpolate(&k, 0.55, 0.55).unwrap();
        assert!((mid - 0.5 * (k.get(5, 5) + k.get(6, 6))).abs() < 1e-14);
        let mid = triangle_interpolate(&k, 0.6, 0.55).unwrap();
        assert!((mid - 0.5 * (k.get(6, 5) + k.get(6, 6))).abs() < 1e-14);
        assert!(matches!(
            triangle_interpolate(&k, 0.3, 0.5),
            Err(Error::Domain { .. })
        ));
        assert!(triangle_interpolate(&k, 1.2, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn trapezoid_is_linear(
            a in proptest::collection::vec(-10.0f64..10.0, 2..40),
            s in -3.0f64..3.0,
        ) {
            let b: Vec<f64> = a.iter().rev().copied().collect();
            let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
            let h = 0.07;
            let lhs = trapezoid(&combo, h).unwrap();
            let rhs = s * trapezoid(&a, h).unwrap() + trapezoid(&b, h).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn l2_triangle_inequality(
            pair in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..60),
        ) {
            let g = grid(pair.len());
            let u: Vec<f64> = pair.iter().map(|p| p.0).collect();
            let v: Vec<f64> = pair.iter().map(|p| p.1).collect();
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let n = |x: Vec<f64>| l2_norm(&PdeState::new(g, x, 0.0).unwrap());
            prop_assert!(n(w) <= n(u) + n(v) + 1e-12);
        }

        #[test]
        fn interpolation_reproduces_nodes(n in 3usize..30, seed in 0u64..1000) {
            let g = grid(n);
            let f = KernelField::from_fn(g, |x, y| ((seed as f64) * x + 7.0 * y).sin());
            for i in 0..n {
                for j in 0..=i {
                    let v = triangle_interpolate(&f, g.node(i), g.node(j)).unwrap();
                    prop_assert!((v - f.get(i, j)).abs() < 1e-12);
                }
            }
        }
    }
}
