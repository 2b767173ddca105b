//! Cart-pendulum: loop-shift the Tustin controller and rank predictor-form realisations.

use obsmpc::models;
use obsmpc::realisation::{prepare, search_realisations, DelayHandling, Form, SearchOptions};

pub fn run_example() -> obsmpc::Result<()> {
    let g = models::pendulum()?;
    let k = models::pendulum_controller()?;
    println!("K0(z): A_K diag = {:.4}, {:.4}", k.a[(0, 0)], k.a[(1, 1)]);
    println!("       D_K = [{:.4}, {:.4}]", k.d[(0, 0)], k.d[(0, 1)]);

    let pair = prepare(Form::Predictor, &g, &k, None, DelayHandling::LoopShift)?;
    let report = search_realisations(&pair, &SearchOptions::default())?;
    println!("closed-loop poles:");
    for p in &report.closed_loop_poles {
        println!("  {:8.4} {:+8.4}j", p[0], p[1]);
    }
    for r in &report.ranked {
        let extra: Vec<String> = r
            .realisation
            .extra_poles
            .iter()
            .map(|p| format!("{:.4}{:+.4}j", p[0], p[1]))
            .collect();
        println!(
            "{}  |G y->yhat| = {:7.3}  |G y->e| = {:7.3}  new poles {}",
            r.realisation.choice.labels(),
            r.score.h2_output_estimate,
            r.score.h2_innovation,
            extra.join(", ")
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
