//! The dual active-set QP solver on a small problem, with KKT residuals and a
//! warm start from the previous active set.

use obsmpc::numerics::{mat, Vector};
use obsmpc::qp::{kkt_residuals, solve_qp, DualActiveSet};

pub fn run_example() -> obsmpc::Result<()> {
    // minimise ½‖x‖² − x₁ − x₂  s.t.  x₁ + x₂ ≤ 1, −x₁ ≤ 0, x₂ ≤ 0.3
    let h = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let f = Vector::from_vec(vec![-1.0, -1.0]);
    let a = mat(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, 1.0]);
    let b = Vector::from_vec(vec![1.0, 0.0, 0.3]);

    let sol = solve_qp(&h, &f, &a, &b)?;
    println!(
        "status {:?} after {} iterations",
        sol.status, sol.iterations
    );
    println!("x* = {:?}, objective {:.6}", sol.x_star, sol.objective);
    println!(
        "active {:?}, multipliers {:?}",
        sol.active_set, sol.multipliers
    );
    let (stat, primal, dual, comp) = kkt_residuals(&h, &f, &a, &b, &sol);
    println!("KKT residuals: stationarity {stat:.1e}, primal {primal:.1e}, dual {dual:.1e}, complementarity {comp:.1e}");

    let warm = DualActiveSet::with_hint(sol.active_set.clone()).solve(&h, &f, &a, &b)?;
    println!(
        "warm start: x* = {:?} in {} iterations",
        warm.x_star, warm.iterations
    );

    // Infeasible: x₁ ≤ −1 and −x₁ ≤ −1.
    let bad = solve_qp(
        &h,
        &f,
        &mat(2, 2, &[1.0, 0.0, -1.0, 0.0]),
        &Vector::from_vec(vec![-1.0, -1.0]),
    )?;
    println!("contradictory bounds: {:?}", bad.status);
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
