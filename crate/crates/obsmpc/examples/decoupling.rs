//! Two identical loops side by side. Choosing complete eigenspaces keeps the
//! realisation decoupled; splitting a repeated eigenspace across S and O mixes
//! the loops.

use obsmpc::lti::closed_loop_matrix;
use obsmpc::numerics::{eig_paired, Mat, Vector};
use obsmpc::realisation::{
    check_decoupling, prepare, search_realisations, solve_t_from_basis, DelayHandling, Form,
    SearchOptions,
};
use obsmpc::synthetic::{single_loop, twin_loops};

/// Copy `c` (0 or 1) of a single-loop eigenvector in twin coordinates [x₁ x₂ k₁ k₂].
fn embed(v: &Vector, c: usize) -> Vector {
    let mut out = Vector::zeros(8);
    for i in 0..2 {
        out[2 * c + i] = v[i];
        out[4 + 2 * c + i] = v[2 + i];
    }
    out
}

/// Coupling of T for a complete selection and for a split one.
pub fn coupling_measures() -> obsmpc::Result<(f64, f64)> {
    let single = single_loop()?;
    let eig = eig_paired(&closed_loop_matrix(&single.plant, &single.controller)?)?;
    let v: Vec<Vector> = (0..4)
        .map(|i| eig.vectors.column(i).map(|z| z.re))
        .collect();
    let twin = twin_loops()?;
    let acl = closed_loop_matrix(&twin.plant, &twin.controller)?;
    let measure = |cols: Vec<Vector>| -> obsmpc::Result<f64> {
        let t = solve_t_from_basis(&acl, 4, &Mat::from_columns(&cols))
            .map_err(|e| obsmpc::Error::Infeasible(e.to_string()))?
            .t;
        check_decoupling(&t, &[2, 2], &[2, 2])
    };
    let complete = measure(vec![
        embed(&v[0], 0),
        embed(&v[0], 1),
        embed(&v[1], 0),
        embed(&v[1], 1),
    ])?;
    let split = measure(vec![
        embed(&v[0], 0),
        embed(&v[0], 1),
        embed(&v[1], 0) + embed(&v[1], 1),
        embed(&v[2], 0) - embed(&v[2], 1),
    ])?;
    Ok((complete, split))
}

pub fn run_example() -> obsmpc::Result<()> {
    let (complete, split) = coupling_measures()?;
    println!("complete eigenspaces: coupling {complete:.3e}");
    println!("split eigenspace:     coupling {split:.3e}");

    // The search never splits a repeated block, so every ranked realisation is decoupled.
    let twin = twin_loops()?;
    let pair = prepare(
        Form::Predictor,
        &twin.plant,
        &twin.controller,
        None,
        DelayHandling::LoopShift,
    )?;
    let report = search_realisations(&pair, &SearchOptions::default())?;
    for r in &report.ranked {
        let kc = check_decoupling(&r.realisation.kc, &[1, 1], &[2, 2])?;
        let kf = check_decoupling(&r.realisation.kf, &[2, 2], &[1, 1])?;
        println!(
            "{}  Kc {kc:.1e}  Kf {kf:.1e}",
            r.realisation.choice.labels()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
