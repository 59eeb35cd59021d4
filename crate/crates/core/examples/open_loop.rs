//! The uncontrolled plant with `lambda = 50 cos(gamma acos x)` blows up;
//! with `lambda = 0` it is the heat equation.

use backstep::grid::{ReactionProfile, UniformGrid1D};
use backstep::sim::{simulate_open_loop, InitialCondition, SimulationConfig};

fn main() -> backstep::Result<()> {
    let grid = UniformGrid1D::new(101)?;
    let heat = SimulationConfig {
        t_final: 0.1,
        initial_condition: InitialCondition::Sine,
        ..Default::default()
    };
    let tr = simulate_open_loop(&ReactionProfile::constant(grid, 0.0)?, &heat)?;
    println!(
        "heat: ||u(0.1)||/||u0|| = {:.5} (exact {:.5})",
        tr.l2_norms[tr.len() - 1] / tr.l2_norms[0],
        (-0.1 * std::f64::consts::PI.powi(2)).exp()
    );
    for gamma in [5.0, 8.0] {
        let lam = ReactionProfile::chebyshev(grid, 50.0, gamma)?;
        let tr = simulate_open_loop(&lam, &SimulationConfig::default())?;
        println!("gamma {gamma}: ||u(1)||/||u0|| = {:.3e}", tr.l2_norms[tr.len() - 1] / tr.l2_norms[0]);
    }
    Ok(())
}
