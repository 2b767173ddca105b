//! Runs every library scenario and prints a one-line summary each.

use obsmpc::scenarios::{Library, ScenarioOptions, SCENARIO_NAMES};
use obsmpc::sim::{simulate, summarise};

pub fn run_example() -> obsmpc::Result<()> {
    let lib = Library::new()?;
    for name in SCENARIO_NAMES {
        let sc = lib.scenario(name, &ScenarioOptions::default())?;
        let trace = simulate(&sc)?;
        let s = summarise(&trace, &sc.bounds, None);
        println!(
            "{name:20} steps {:4} diverged {} max|y| {:?} max|u| {:?} u-viol {:.2e} soft-viol {:.3e} iters {:.1}/{} fallbacks {}",
            s.steps,
            s.diverged,
            s.max_abs_y.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            s.max_abs_u.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            s.max_input_violation,
            s.max_soft_violation,
            s.qp_iterations_mean,
            s.qp_iterations_max,
            s.fallbacks
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
