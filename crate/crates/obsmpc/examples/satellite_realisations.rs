//! Rank the observer realisations of the satellite attitude controller.

use obsmpc::models;
use obsmpc::realisation::{prepare, search_realisations, DelayHandling, Form, SearchOptions};

pub fn run_example() -> obsmpc::Result<()> {
    let g = models::satellite()?;
    let k = models::satellite_controller()?;
    let pair = prepare(
        Form::Filter,
        &g,
        &k,
        Some(models::SATELLITE_DIPOLE_W),
        DelayHandling::LoopShift,
    )?;
    let opts = SearchOptions {
        disturbance_states: models::SATELLITE_DISTURBANCE_STATES,
        margin_channel: Some(0),
        ..SearchOptions::default()
    };
    let report = search_realisations(&pair, &opts)?;

    println!("closed-loop poles:");
    for p in &report.closed_loop_poles {
        println!("  {:8.4} {:+8.4}j", p[0], p[1]);
    }
    println!(
        "{} choices, {} feasible",
        report.n_choices,
        report.ranked.len()
    );
    println!(
        "{:<8} {:>9} {:>9} {:>9} {:>10} {:>7} {:>7}",
        "split", "noise", "innov", "dist", "product", "GM", "DM"
    );
    for r in &report.ranked {
        let s = &r.score;
        let m = s.margins.as_ref().expect("margins requested");
        println!(
            "{:<8} {:9.4} {:9.4} {:9.4} {:10.4} {:7.3} {:7.3}",
            r.realisation.choice.labels(),
            s.h2_noise,
            s.h2_innovation,
            s.h2_dist.unwrap_or(f64::NAN),
            s.product,
            m.gain_margin,
            m.delay_margin
        );
    }
    for r in &report.rejected {
        println!("rejected {}: {}", r.choice.labels(), r.reason);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
