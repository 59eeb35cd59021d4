//! Feedback from the observer estimate instead of the measured state, with
//! the kernel perturbation fields of a deliberately biased gain.

use backstep::analysis::perturbation_fields;
use backstep::grid::{KernelField, ReactionProfile, UniformGrid1D};
use backstep::kernel::solve_kernel_fd;
use backstep::sim::{simulate_output_feedback, InitialCondition, SimulationConfig};

fn main() -> backstep::Result<()> {
    let grid = UniformGrid1D::new(101)?;
    let lam = ReactionProfile::chebyshev(grid, 20.0, 5.0)?;
    let k = solve_kernel_fd(&lam, 101)?;
    let cfg = SimulationConfig {
        record_stride: 1000,
        ..Default::default()
    };
    let tr = simulate_output_feedback(&lam, &k, &cfg, &InitialCondition::Constant { value: 20.0 })?;
    let err = tr.err_norms.as_ref().expect("observer trace");
    for i in 0..tr.len() {
        println!(
            "t {:.1}  ||u|| {:.3e}  ||u - u_hat|| {:.3e}  U {:+.3e}",
            tr.times[i], tr.l2_norms[i], err[i], tr.control[i]
        );
    }
    let k_hat = k.sub(&KernelField::from_fn(grid, |x, y| -0.5 * x * y))?;
    let p = perturbation_fields(&k_hat, &k, &lam)?;
    println!(
        "k_hat = k + 0.5xy: sup delta_k0 {:.3} sup delta_k1 {:.3}",
        p.delta_k0_sup(),
        p.delta_k1_sup()
    );
    Ok(())
}
