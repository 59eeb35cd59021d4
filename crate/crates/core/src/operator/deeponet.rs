use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Dense, Mlp};
use crate::error::{invalid, Error, Result};
use crate::grid::{KernelField, ReactionProfile, UniformGrid1D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorArchitecture {
    /// Number of equispaced sensors `m` the branch reads `lambda` at.
    pub sensors: usize,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    /// Basis size `p`.
    pub basis: usize,
    pub activation: Activation,
}

impl Default for OperatorArchitecture {
    fn default() -> Self {
        Self {
            sensors: 101,
            branch_hidden: vec![128, 128],
            trunk_hidden: vec![128, 128],
            basis: 64,
            activation: Activation::Tanh,
        }
    }
}

impl OperatorArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.sensors < 2 || self.basis < 1 {
            return Err(invalid("operator needs at least 2 sensors and basis size >= 1"));
        }
        if self.branch_hidden.iter().chain(&self.trunk_hidden).any(|&w| w == 0) {
            return Err(invalid("hidden widths must be positive"));
        }
        Ok(())
    }

    fn branch_widths(&self) -> Vec<usize> {
        let mut w = vec![self.sensors];
        w.extend(&self.branch_hidden);
        w.push(self.basis);
        w
    }

    fn trunk_widths(&self) -> Vec<usize> {
        let mut w = vec![2];
        w.extend(&self.trunk_hidden);
        w.push(self.basis);
        w
    }
}

/// DeepONet for `lambda -> k`:
///
/// ```text
/// k_hat(x, y) = y * sum_k b_k(lambda(x_1), .., lambda(x_m)) t_k(x, y)
/// ```
///
/// The factor `y` makes `k_hat(x, 0) = 0` hold exactly for every parameter
/// value. Branch inputs are `lambda` at the sensors times `input_scale`; trunk
/// inputs are `(2x - 1, 2y - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepOperatorModel {
    pub arch: OperatorArchitecture,
    pub sensor_locations: Vec<f64>,
    pub input_scale: f64,
    pub init_seed: u64,
    pub branch: Mlp,
    pub trunk: Mlp,
}

/// Trunk outputs times `y` on every node of a triangle grid. They do not
/// depend on `lambda`, so repeated predictions on one grid reuse them.
#[derive(Debug, Clone)]
pub struct TrunkBasis {
    grid: UniformGrid1D,
    /// `triangle_len x p`
    weighted: Array2<f64>,
}

impl TrunkBasis {
    pub fn grid(&self) -> UniformGrid1D {
        self.grid
    }
}

pub(crate) fn triangle_points(grid: UniformGrid1D) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(grid.triangle_len());
    for i in 0..grid.n_points() {
        for j in 0..=i {
            pts.push((grid.node(i), grid.node(j)));
        }
    }
    pts
}

pub(crate) fn trunk_input(points: &[(f64, f64)]) -> Array2<f64> {
    let mut a = Array2::zeros((points.len(), 2));
    for (row, &(x, y)) in a.outer_iter_mut().zip(points) {
        let mut row = row;
        row[0] = 2.0 * x - 1.0;
        row[1] = 2.0 * y - 1.0;
    }
    a
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    for &(x, y) in points {
        if !(x.is_finite() && y.is_finite()) || y < 0.0 || y > x || x > 1.0 {
            return Err(Error::Domain { x, y });
        }
    }
    Ok(())
}

impl DeepOperatorModel {
    pub fn new(arch: OperatorArchitecture, input_scale: f64, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch = Mlp::new(&arch.branch_widths(), arch.activation, &mut rng);
        let trunk = Mlp::new(&arch.trunk_widths(), arch.activation, &mut rng);
        Ok(Self::assemble(arch, input_scale, seed, branch, trunk))
    }

    /// All weights and biases zero.
    pub fn zeros(arch: OperatorArchitecture, input_scale: f64) -> Result<Self> {
        arch.validate()?;
        let branch = Mlp::zeros(&arch.branch_widths(), arch.activation);
        let trunk = Mlp::zeros(&arch.trunk_widths(), arch.activation);
        Ok(Self::assemble(arch, input_scale, 0, branch, trunk))
    }

    fn assemble(
        arch: OperatorArchitecture,
        input_scale: f64,
        init_seed: u64,
        branch: Mlp,
        trunk: Mlp,
    ) -> Self {
        let m = arch.sensors;
        let sensor_locations = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        Self {
            arch,
            sensor_locations,
            input_scale,
            init_seed,
            branch,
            trunk,
        }
    }

    pub fn param_count(&self) -> usize {
        self.branch.param_count() + self.trunk.param_count()
    }

    /// Layers in persistence order: branch first, then trunk.
    pub(crate) fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.branch.layers.iter().chain(self.trunk.layers.iter())
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.branch
            .layers
            .iter_mut()
            .chain(self.trunk.layers.iter_mut())
    }

    /// Scaled sensor readings of `lambda`.
    pub fn branch_input(&self, lambda: &ReactionProfile) -> Vec<f64> {
        self.sensor_locations
            .iter()
            .map(|&x| lambda.eval(x) * self.input_scale)
            .collect()
    }

    pub(crate) fn branch_batch(&self, lambdas: &[&ReactionProfile]) -> Array2<f64> {
        let m = self.arch.sensors;
        let mut a = Array2::zeros((lambdas.len(), m));
        for (mut row, lam) in a.outer_iter_mut().zip(lambdas) {
            for (dst, v) in row.iter_mut().zip(self.branch_input(lam)) {
                *dst = v;
            }
        }
        a
    }

    /// `k_hat(x, y)` at arbitrary points of the triangle.
    pub fn evaluate(&self, lambda: &ReactionProfile, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        check_points(points)?;
        let b = self.branch.forward(
            Array2::from_shape_vec((1, self.arch.sensors), self.branch_input(lambda))
                .expect("sensor count")
                .view(),
        );
        let t = self.trunk.forward(trunk_input(points).view());
        let s = t.dot(&b.row(0));
        Ok(points.iter().zip(s.iter()).map(|(&(_, y), &v)| y * v).collect())
    }

    pub fn predict_kernel(&self, lambda: &ReactionProfile, n_points: usize) -> Result<KernelField> {
        let grid = UniformGrid1D::new(n_points)?;
        let values = self.evaluate(lambda, &triangle_points(grid))?;
        KernelField::from_values(grid, values)
    }

    pub fn trunk_basis(&self, n_points: usize) -> Result<TrunkBasis> {
        let grid = UniformGrid1D::new(n_points)?;
        let pts = triangle_points(grid);
        let mut weighted = self.trunk.forward(trunk_input(&pts).view());
        for (mut row, &(_, y)) in weighted.outer_iter_mut().zip(&pts) {
            row *= y;
        }
        Ok(TrunkBasis { grid, weighted })
    }

    /// Same values as [`DeepOperatorModel::predict_kernel`] using a
    /// precomputed trunk basis.
    pub fn predict_with_basis(
        &self,
        basis: &TrunkBasis,
        lambda: &ReactionProfile,
    ) -> Result<KernelField> {
        if basis.weighted.ncols() != self.arch.basis {
            return Err(invalid("trunk basis belongs to a different model"));
        }
        let b = self.branch.forward(
            Array2::from_shape_vec((1, self.arch.sensors), self.branch_input(lambda))
                .expect("sensor count")
                .view(),
        );
        let v = basis.weighted.dot(&b.row(0));
        KernelField::from_values(basis.grid, v.to_vec())
    }

    /// Mean squared error over a batch and its gradient, accumulated into
    /// `branch_grads` / `trunk_grads`.
    ///
    /// `branch_in` is `batch x m`, `trunk_in` is `P x 2` with `y` holding the
    /// physical `y` of each point, `targets` is `batch x P`.
    pub(crate) fn loss_and_grads(
        &self,
        branch_in: ArrayView2<f64>,
        trunk_in: ArrayView2<f64>,
        y: &[f64],
        targets: ArrayView2<f64>,
        branch_grads: &mut [Dense],
        trunk_grads: &mut [Dense],
    ) -> f64 {
        let (b_out, b_cache) = self.branch.forward_train(branch_in);
        let (t_out, t_cache) = self.trunk.forward_train(trunk_in);
        let mut resid = b_out.dot(&t_out.t());
        for (mut col, &yy) in resid.axis_iter_mut(Axis(1)).zip(y) {
            col *= yy;
        }
        resid -= &targets;
        let count = (resid.len()) as f64;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / count;
        // d loss / d s = 2 r y / count
        let scale = 2.0 / count;
        for (mut col, &yy) in resid.axis_iter_mut(Axis(1)).zip(y) {
            col *= scale * yy;
        }
        let d_b = resid.dot(&t_out);
        let d_t = resid.t().dot(&b_out);
        self.branch.backward(&b_cache, d_b, branch_grads);
        self.trunk.backward(&t_cache, d_t, trunk_grads);
        loss
    }
}

/// Relative L2 distance over the triangle nodes, `||a - b|| / ||b||`.
pub fn relative_l2(pred: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = pred.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}
