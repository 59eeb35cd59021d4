//! Closed-form stability constants over a range of reaction bounds.

use backstep::analysis::{log_epsilon_star, StabilityReport};

fn main() -> backstep::Result<()> {
    println!("{:>6} {:>12} {:>12} {:>14} {:>8}", "lbar", "M(0)", "eps*", "ln eps*", "vacuous");
    for lb in [0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 20.0, 50.0] {
        let r = StabilityReport::new(0.0, lb)?;
        println!(
            "{lb:6.2} {:12.4e} {:12.4e} {:14.6e} {:>8}",
            r.overshoot_m,
            r.epsilon_star,
            log_epsilon_star(lb)?,
            r.vacuous_bound
        );
    }
    println!("{}", serde_json::to_string_pretty(&StabilityReport::new(0.05, 0.5)?)?);
    Ok(())
}
