//! Boundary-flux observer on `20 cos(5 acos x)` driven by a sinusoidal
//! input, started from the wrong initial state.

use backstep::grid::{ReactionProfile, UniformGrid1D};
use backstep::kernel::solve_kernel_fd;
use backstep::sim::{simulate_observer, InitialCondition, Signal, SimulationConfig};

fn main() -> backstep::Result<()> {
    let lam = ReactionProfile::chebyshev(UniformGrid1D::new(101)?, 20.0, 5.0)?;
    let k = solve_kernel_fd(&lam, 101)?;
    let cfg = SimulationConfig {
        record_stride: 1000,
        ..Default::default()
    };
    let tr = simulate_observer(
        &lam,
        &k,
        &cfg,
        &InitialCondition::Constant { value: 20.0 },
        &Signal::observer_demo(),
    )?;
    let err = tr.err_norms.as_ref().expect("observer trace");
    for ((t, u), e) in tr.times.iter().zip(&tr.l2_norms).zip(err) {
        println!("t {t:.1}  ||u|| {u:8.4}  ||u - u_hat|| {e:.3e}");
    }
    Ok(())
}
