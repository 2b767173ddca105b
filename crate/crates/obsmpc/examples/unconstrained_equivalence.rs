//! Without active constraints the observer-based MPC reproduces the original
//! loop sample for sample: satellite (filter form), pendulum (predictor form
//! after loop shifting) and a few random stabilised loops.

use obsmpc::numerics::{eig_paired, Vector};
use obsmpc::realisation::{
    enumerate_choices, prepare, realise_choice, DelayHandling, Form, SearchOptions,
};
use obsmpc::scenarios::{pendulum_design, satellite_design, PENDULUM_LABELS, SATELLITE_LABELS};
use obsmpc::sim::equivalence_gap;
use obsmpc::{models, synthetic};

pub fn run_example() -> obsmpc::Result<()> {
    let sat = satellite_design()?;
    let x0 = Vector::from_vec(vec![0.5, -0.02, 0.01]);
    for label in SATELLITE_LABELS {
        let gap = equivalence_gap(
            &models::satellite()?,
            &sat.pair,
            sat.by_label(label)?,
            &x0,
            400,
            15,
        )?;
        println!("satellite {label}  max gap {gap:.2e}");
    }
    let pend = pendulum_design()?;
    let x0 = Vector::from_vec(vec![0.1, 0.0, 0.05, 0.0]);
    for label in PENDULUM_LABELS {
        let gap = equivalence_gap(
            &models::pendulum()?,
            &pend.pair,
            pend.by_label(label)?,
            &x0,
            400,
            15,
        )?;
        println!("pendulum  {label}  max gap {gap:.2e}");
    }

    for seed in 0..5 {
        let lp = synthetic::random_loop(seed, 6, 3, 2, 2)?;
        let pair = prepare(
            Form::Predictor,
            &lp.plant,
            &lp.controller,
            None,
            DelayHandling::LoopShift,
        )?;
        let acl = pair.closed_loop()?;
        let eig = eig_paired(&acl)?;
        let opts = SearchOptions::default();
        let first = enumerate_choices(&eig, 6, 3, &[])?
            .iter()
            .find_map(|c| realise_choice(&pair, &acl, &eig, c, &opts).ok());
        let Some((r, _)) = first else {
            println!("random seed {seed}: no feasible split");
            continue;
        };
        let x0 = Vector::from_element(6, 1.0);
        let gap = equivalence_gap(&lp.plant, &pair, &r, &x0, 400, 10)?;
        println!(
            "random    seed {seed} {}  max gap {gap:.2e}",
            r.choice.labels()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
