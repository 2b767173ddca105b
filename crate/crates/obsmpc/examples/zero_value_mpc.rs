//! The inverse-optimal stage cost has zero value along u = K_c·x, so the
//! unconstrained MPC returns the original state feedback. The prestabilised
//! condensation gives the same inputs.

use obsmpc::mpc::{
    condense, design_model, effect_cost, matching_cost, Formulation, Interval, MpcConfig,
};
use obsmpc::numerics::{Mat, Vector};
use obsmpc::qp::DualActiveSet;
use obsmpc::runtime::mpc_step;
use obsmpc::scenarios::{satellite_design, HORIZON, SATELLITE_LABELS};

pub fn run_example() -> obsmpc::Result<()> {
    let design = satellite_design()?;
    let r = design.by_label(SATELLITE_LABELS[2])?;
    let model = design_model(&design.pair);
    let solver = DualActiveSet::new();
    let x0 = Vector::from_vec(vec![0.3, -0.05, 0.02]);
    let w = Vector::zeros(1);
    let xr = Vector::zeros(3);

    for (name, cost) in [
        ("matching", matching_cost(&r.kc, &Mat::identity(2, 2))?),
        (
            "effect",
            effect_cost(
                &r.kc,
                &design.pair.plant.b,
                &(Mat::identity(3, 3) * 1e3),
                &(Mat::identity(2, 2) * 1e-3),
            )?,
        ),
    ] {
        println!(
            "{name} cost: ℓ(x, K_c x) = {:.1e}",
            cost.eval(&x0, &(&r.kc * &x0))
        );
        let cfg = MpcConfig::unconstrained(HORIZON, cost);
        let cross = condense(&model, &cfg, Formulation::CrossTerm)?;
        let pre = condense(&model, &cfg, Formulation::Prestabilised)?;
        let theta = cross.theta(&x0, &w, &xr)?;
        let (v, d) = mpc_step(&cross, &theta, &solver)?;
        let (vp, _) = mpc_step(&pre, &theta, &solver)?;
        let u0 = cross.first_input(&v, &theta);
        let gap = (cross.inputs(&v, &theta) - pre.inputs(&vp, &theta)).amax();
        println!(
            "  objective {:.1e}  |u0 − K_c x| {:.1e}  cross-term vs prestabilised {:.1e}",
            d.objective,
            (&u0 - &r.kc * &x0).amax(),
            gap
        );
    }

    let mut cfg = MpcConfig::unconstrained(HORIZON, matching_cost(&r.kc, &Mat::identity(2, 2))?);
    cfg.u_bounds = vec![Some(Interval::symmetric(0.11)); 2];
    cfg.y_bounds = vec![Some(Interval::symmetric(0.01))];
    let qp = condense(&model, &cfg, Formulation::CrossTerm)?;
    println!(
        "satellite QP with bounds: {} decision variables, {} constraints",
        qp.n_decision(),
        qp.n_constraints()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
