//! Realisation search at scale: a 21-state block-structured plant with a
//! 17-state controller, so four observer poles are free and every choice
//! needs a Kalman design for them.

use std::time::Instant;

use obsmpc::realisation::{prepare, search_realisations, DelayHandling, Form, SearchOptions};
use obsmpc::synthetic::{block_structured, BLOCKS};

pub fn run_example() -> obsmpc::Result<()> {
    let lp = block_structured(7)?;
    println!(
        "plant {} states, controller {} states, {} blocks",
        lp.plant.n(),
        lp.controller.n(),
        BLOCKS
    );
    let pair = prepare(
        Form::Predictor,
        &lp.plant,
        &lp.controller,
        None,
        DelayHandling::LoopShift,
    )?;
    let opts = SearchOptions {
        disturbance_states: BLOCKS,
        ..SearchOptions::default()
    };
    let start = Instant::now();
    let report = search_realisations(&pair, &opts)?;
    let elapsed = start.elapsed();
    println!(
        "{} choices ({} forced into S), {} feasible, {:.1} s",
        report.n_choices,
        report.forced_s.len(),
        report.ranked.len(),
        elapsed.as_secs_f64()
    );
    let mut products: Vec<f64> = report
        .ranked
        .iter()
        .map(|r| r.score.product)
        .filter(|p| p.is_finite())
        .collect();
    products.sort_by(f64::total_cmp);
    let median = products
        .get(products.len() / 2)
        .copied()
        .unwrap_or(f64::NAN);
    let best = &report.ranked[0];
    println!(
        "best {} product {:.4}; median {:.4}",
        best.realisation.choice.labels(),
        best.score.product,
        median
    );
    let mut reasons: std::collections::BTreeMap<String, usize> = Default::default();
    for r in &report.rejected {
        let key = r
            .reason
            .split(['(', ' '])
            .take(2)
            .collect::<Vec<_>>()
            .join(" ");
        *reasons.entry(key).or_default() += 1;
    }
    for (why, n) in reasons {
        println!("  rejected {n:6}: {why}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
