//! Finite-difference check of the hand-written gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::deeponet::{triangle_points, trunk_input, DeepOperatorModel};
use crate::error::Result;
use crate::grid::{ReactionProfile, UniformGrid1D};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Triangle resolution of the check loss.
const CHECK_POINTS: usize = 9;

/// Worst discrepancy between analytic and central-difference gradients of
/// the MSE loss over every parameter.
///
/// The loss compares predictions for `lambda` on a coarse triangle grid with
/// targets drawn from `seed`. Discrepancies are `|g - g_fd| / max(|g|, |g_fd|, 1)`.
pub fn gradient_check(model: &DeepOperatorModel, lambda: &ReactionProfile, seed: u64) -> Result<f64> {
    let grid = UniformGrid1D::new(CHECK_POINTS)?;
    let pts = triangle_points(grid);
    let t_in = trunk_input(&pts);
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let b_in = model.branch_batch(&[lambda]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = Array2::from_shape_fn((1, pts.len()), |_| rng.gen_range(-1.0..1.0));

    let loss_grads = |m: &DeepOperatorModel| {
        let mut bg = m.branch.zero_grads();
        let mut tg = m.trunk.zero_grads();
        let loss = m.loss_and_grads(b_in.view(), t_in.view(), &y, targets.view(), &mut bg, &mut tg);
        bg.extend(tg);
        (loss, bg)
    };
    let (_, analytic) = loss_grads(model);
    let analytic: Vec<f64> = analytic
        .iter()
        .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
        .collect();

    let mut probe = model.clone();
    let mut worst = 0.0_f64;
    for (p, &g) in analytic.iter().enumerate() {
        let orig = param_mut(&mut probe, p, |v| *v);
        param_mut(&mut probe, p, |v| *v = orig + FD_STEP);
        let up = loss_grads(&probe).0;
        param_mut(&mut probe, p, |v| *v = orig - FD_STEP);
        let down = loss_grads(&probe).0;
        param_mut(&mut probe, p, |v| *v = orig);
        let fd = (up - down) / (2.0 * FD_STEP);
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1.0));
    }
    Ok(worst)
}

/// Apply `f` to the parameter with flat index `p` in storage order.
fn param_mut<T>(model: &mut DeepOperatorModel, mut p: usize, f: impl FnOnce(&mut f64) -> T) -> T {
    for l in model.layers_mut() {
        let (nw, nb) = (l.w.len(), l.b.len());
        if p < nw {
            let cols = l.w.ncols();
            return f(&mut l.w[[p / cols, p % cols]]);
        }
        p -= nw;
        if p < nb {
            return f(&mut l.b[p]);
        }
        p -= nb;
    }
    panic!("parameter index out of range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{Activation, OperatorArchitecture};

    fn lam() -> ReactionProfile {
        ReactionProfile::chebyshev(UniformGrid1D::new(31).unwrap(), 50.0, 6.5).unwrap()
    }

    fn arch(hidden: Vec<usize>, act: Activation) -> OperatorArchitecture {
        OperatorArchitecture {
            sensors: 12,
            branch_hidden: hidden.clone(),
            trunk_hidden: hidden,
            basis: 5,
            activation: act,
        }
    }

    #[test]
    fn linear_single_layer() {
        let m = DeepOperatorModel::new(arch(vec![], Activation::Linear), 0.02, 5).unwrap();
        assert!(gradient_check(&m, &lam(), 1).unwrap() <= 1e-7);
    }

    #[test]
    fn tanh_networks_across_seeds() {
        for seed in 0..10 {
            let m = DeepOperatorModel::new(arch(vec![16, 16], Activation::Tanh), 0.02, seed).unwrap();
            assert!(m.param_count() <= 10_000);
            let e = gradient_check(&m, &lam(), seed + 100).unwrap();
            assert!(e <= 1e-5, "seed {seed}: {e}");
        }
    }

    #[test]
    fn zero_model() {
        let m = DeepOperatorModel::zeros(arch(vec![8], Activation::Tanh), 0.02).unwrap();
        assert!(gradient_check(&m, &lam(), 3).unwrap() <= 1e-6);
    }
}
