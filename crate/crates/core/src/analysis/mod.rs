//! Closed-form stability constants, trace certification and the kernel
//! perturbation fields.
//!
//! With `K = lambda_bar e^(2 lambda_bar)` the overshoot and the perturbation
//! budget are
//!
//! ```text
//! M(eps, lambda_bar)      = (1 + K)(1 + K + eps) e^(K + eps)
//! delta*(eps, lambda_bar) = 2 eps (1 + K + eps) e^(K + eps)
//! ```
//!
//! and `eps*` is the root of `delta* = 1/2`. For `lambda_bar` beyond about
//! 2.6 the exponential overflows `f64`; `M` is then `+inf`, `eps*`
//! underflows, and the log-space values remain meaningful.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::{KernelField, ReactionProfile};
use crate::kernel::{interior_nodes, pde_operator_at};
use crate::operator::error_report::nodal_derivative;
use crate::sim::SimulationTrace;

mod bench;
pub use bench::{speedup_benchmark, BenchConfig, BenchEntry, BenchReport};

/// Relative slack of the envelope test.
pub const ENVELOPE_SLACK: f64 = 1e-9;

/// Bisection tolerance for `eps*`.
pub const EPSILON_STAR_TOL: f64 = 1e-12;

fn check_args(eps: f64, lambda_bar: f64) -> Result<()> {
    if !(eps >= 0.0 && lambda_bar >= 0.0) || eps.is_infinite() || lambda_bar.is_infinite() {
        return Err(invalid("certificate arguments must be finite and nonnegative"));
    }
    Ok(())
}

/// `K = lambda_bar e^(2 lambda_bar)`.
pub fn kernel_bound_constant(lambda_bar: f64) -> f64 {
    lambda_bar * (2.0 * lambda_bar).exp()
}

pub fn overshoot_m(eps: f64, lambda_bar: f64) -> Result<f64> {
    check_args(eps, lambda_bar)?;
    let k = kernel_bound_constant(lambda_bar);
    Ok((1.0 + k) * (1.0 + k + eps) * (k + eps).exp())
}

pub fn log_overshoot_m(eps: f64, lambda_bar: f64) -> Result<f64> {
    check_args(eps, lambda_bar)?;
    let k = kernel_bound_constant(lambda_bar);
    Ok(k.ln_1p() + (k + eps).ln_1p() + k + eps)
}

pub fn delta_star(eps: f64, lambda_bar: f64) -> Result<f64> {
    check_args(eps, lambda_bar)?;
    if eps == 0.0 {
        return Ok(0.0);
    }
    let k = kernel_bound_constant(lambda_bar);
    Ok(2.0 * eps * (1.0 + k + eps) * (k + eps).exp())
}

/// `ln delta*`; `-inf` at `eps = 0`.
pub fn log_delta_star(eps: f64, lambda_bar: f64) -> Result<f64> {
    check_args(eps, lambda_bar)?;
    let k = kernel_bound_constant(lambda_bar);
    Ok(std::f64::consts::LN_2 + eps.ln() + (k + eps).ln_1p() + k + eps)
}

/// Root of `delta*(eps, lambda_bar) = 1/2` by bisection on `[0, 1]`,
/// stopped once the bracket is below `1e-12` absolute and relative width.
///
/// Returns `0.0` when the root is below the smallest positive `f64`; see
/// [`log_epsilon_star`].
pub fn epsilon_star(lambda_bar: f64) -> Result<f64> {
    check_args(0.0, lambda_bar)?;
    let k = kernel_bound_constant(lambda_bar);
    if !k.exp().is_finite() {
        return Ok(log_epsilon_star(lambda_bar)?.exp());
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    // delta*(1) >= 4 e > 1/2
    while hi - lo > EPSILON_STAR_TOL * hi.min(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta_star(mid, lambda_bar)? < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `ln eps*`, by bisection on `s = ln eps` of `ln delta*(e^s) = ln(1/2)`.
pub fn log_epsilon_star(lambda_bar: f64) -> Result<f64> {
    check_args(0.0, lambda_bar)?;
    let k = kernel_bound_constant(lambda_bar);
    let target = -std::f64::consts::LN_2;
    let g = |s: f64| std::f64::consts::LN_2 + s + (k + s.exp()).ln_1p() + k + s.exp() - target;
    // g(lo) < 0 < g(0)
    let mut lo = -(k + k.ln_1p() + 10.0);
    let mut hi = 0.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= EPSILON_STAR_TOL * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Serializes `+inf` as JSON `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub lambda_bar: f64,
    pub epsilon: f64,
    /// `+inf` when the formula overflows.
    pub overshoot_m: f64,
    pub log_overshoot_m: f64,
    pub delta_star: f64,
    pub epsilon_star: f64,
    pub log_epsilon_star: f64,
    /// `eps < eps*`, decided in log space.
    pub certified: bool,
    /// `M` is not a finite `f64`, so the envelope holds trivially.
    pub vacuous_bound: bool,
    /// Samples above `M e^(-(t - t0)/2) ||u(t0)||`; `None` until a trace is
    /// checked.
    pub envelope_violations: Option<usize>,
}

impl StabilityReport {
    pub fn new(epsilon: f64, lambda_bar: f64) -> Result<Self> {
        let overshoot = overshoot_m(epsilon, lambda_bar)?;
        let log_eps_star = log_epsilon_star(lambda_bar)?;
        let certified = epsilon == 0.0 || epsilon.ln() < log_eps_star;
        Ok(Self {
            lambda_bar,
            epsilon,
            overshoot_m: overshoot,
            log_overshoot_m: log_overshoot_m(epsilon, lambda_bar)?,
            delta_star: delta_star(epsilon, lambda_bar)?,
            epsilon_star: epsilon_star(lambda_bar)?,
            log_epsilon_star: log_eps_star,
            certified,
            vacuous_bound: !overshoot.is_finite(),
            envelope_violations: None,
        })
    }

    /// Report with an explicit overshoot, for checker sanity runs.
    pub fn with_overshoot(mut self, m: f64) -> Self {
        self.overshoot_m = m;
        self.log_overshoot_m = m.ln();
        self.vacuous_bound = !m.is_finite();
        self
    }
}

/// Count samples with `norm(t) > M e^(-(t - t0)/2) norm(t0) (1 + 1e-9)`.
pub fn envelope_violations(times: &[f64], norms: &[f64], overshoot: f64) -> Result<usize> {
    if times.is_empty() || times.len() != norms.len() {
        return Err(invalid("envelope check needs a nonempty trace"));
    }
    let (t0, n0) = (times[0], norms[0]);
    Ok(times
        .iter()
        .zip(norms)
        .filter(|&(&t, &n)| n > overshoot * (-(t - t0) / 2.0).exp() * n0 * (1.0 + ENVELOPE_SLACK))
        .count())
}

/// Fill `envelope_violations` from the plant norms of `trace`.
pub fn certify_trace(trace: &SimulationTrace, report: &StabilityReport) -> Result<StabilityReport> {
    let mut out = *report;
    out.envelope_violations = Some(envelope_violations(&trace.times, &trace.l2_norms, report.overshoot_m)?);
    Ok(out)
}

/// Fill `envelope_violations` from the observer error norms of `trace`.
pub fn certify_observer_trace(trace: &SimulationTrace, report: &StabilityReport) -> Result<StabilityReport> {
    let err = trace
        .err_norms
        .as_ref()
        .ok_or_else(|| invalid("trace has no observer error norms"))?;
    let mut out = *report;
    out.envelope_violations = Some(envelope_violations(&trace.times, err, report.overshoot_m)?);
    Ok(out)
}

/// Perturbations a learned kernel leaves in the target system.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationFields {
    /// `2 d/dx k_hat(x, x) + lambda(x)` at every node.
    pub delta_k0: Vec<f64>,
    /// `(d_xx - d_yy) k_hat - lambda(y) k_hat` on interior nodes, zero elsewhere.
    pub delta_k1: KernelField,
    /// `sup |delta_k0 + 2 d/dx (k - k_hat)(x, x)|`.
    pub k0_identity_gap: f64,
    /// `sup |delta_k1 + (d_xx - d_yy)(k - k_hat) - lambda (k - k_hat)|`.
    pub k1_identity_gap: f64,
}

impl PerturbationFields {
    pub fn delta_k0_sup(&self) -> f64 {
        self.delta_k0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn delta_k1_sup(&self) -> f64 {
        self.delta_k1.sup_norm()
    }
}

pub fn perturbation_fields(
    k_hat: &KernelField,
    k: &KernelField,
    lambda: &ReactionProfile,
) -> Result<PerturbationFields> {
    let grid = k.grid();
    grid.check_same(&k_hat.grid())?;
    grid.check_same(&lambda.grid())?;
    let h = grid.spacing();
    let lam = lambda.values();
    let d_hat = nodal_derivative(&k_hat.diagonal(), h);
    let delta_k0: Vec<f64> = d_hat.iter().zip(lam).map(|(d, l)| 2.0 * d + l).collect();
    let tilde = k.sub(k_hat)?;
    let d_tilde = nodal_derivative(&tilde.diagonal(), h);
    let k0_identity_gap = delta_k0
        .iter()
        .zip(&d_tilde)
        .fold(0.0_f64, |m, (a, b)| m.max((a + 2.0 * b).abs()));

    let inv_h2 = 1.0 / (h * h);
    let mut delta_k1 = KernelField::zeros(grid);
    let mut k1_identity_gap = 0.0_f64;
    for (i, j) in interior_nodes(grid.n_points()) {
        let v = pde_operator_at(k_hat, lam, inv_h2, i, j);
        delta_k1.set(i, j, v);
        k1_identity_gap = k1_identity_gap.max((v + pde_operator_at(&tilde, lam, inv_h2, i, j)).abs());
    }
    Ok(PerturbationFields {
        delta_k0,
        delta_k1,
        k0_identity_gap,
        k1_identity_gap,
    })
}
