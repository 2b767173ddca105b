//! Satellite attitude control with the reverse-engineered MPC: torque bounds,
//! the effect-matching cost that shares torque between the redundant
//! actuators, and recovery from a locked actuator.

use obsmpc::scenarios::{Library, ScenarioOptions};
use obsmpc::sim::{simulate, summarise, Trace};

fn net_torque(t: &Trace, k: usize) -> f64 {
    t.rows[k].u.iter().sum()
}

pub fn run_example() -> obsmpc::Result<()> {
    let lib = Library::new()?;
    let opts = ScenarioOptions::default();
    let run = |name: &str| -> obsmpc::Result<(Trace, obsmpc::sim::Scenario)> {
        let sc = lib.scenario(name, &opts)?;
        Ok((simulate(&sc)?, sc))
    };
    let (base, _) = run("satellite-baseline")?;
    let (case1, _) = run("satellite-case-1")?;
    let (case2, sc2) = run("satellite-case-2")?;
    let (case3, sc3) = run("satellite-case-3")?;

    let s1 = summarise(&case1, &Default::default(), Some(&base));
    println!(
        "case 1 vs baseline: RMS output difference {:.2e} (Ts/10 control lag)",
        s1.rms_output_difference.unwrap_or(0.0)
    );
    let s2 = summarise(&case2, &sc2.bounds, Some(&case1));
    println!(
        "case 2 (|u| ≤ 0.11, matching): max|u| {:?}, RMS output change {:.2e}",
        s2.max_abs_u,
        s2.rms_output_difference.unwrap_or(0.0)
    );
    let s3 = summarise(&case3, &sc3.bounds, None);
    let mut dy: f64 = 0.0;
    let mut dtorque: f64 = 0.0;
    for k in 0..case3.rows.len() {
        dy = dy.max((case3.rows[k].y[0] - case1.rows[k].y[0]).abs());
        dtorque = dtorque.max((net_torque(&case3, k) - net_torque(&case1, k)).abs());
    }
    println!("case 3 (|u| ≤ 0.11, effect): max|u| {:?}", s3.max_abs_u);
    println!("  output deviation from unconstrained {dy:.2e} rad, net torque deviation {dtorque:.2e} N·m");
    let k_peak = (0..case1.rows.len())
        .max_by(|&a, &b| {
            case1.rows[a].u[0]
                .abs()
                .total_cmp(&case1.rows[b].u[0].abs())
        })
        .unwrap_or(0);
    println!(
        "  at t = {:.2}: unconstrained u = {:?}, case 3 u = {:?}",
        case1.rows[k_peak].t, case1.rows[k_peak].u, case3.rows[k_peak].u
    );

    for name in ["satellite-case-4", "satellite-case-5"] {
        let (t, sc) = run(name)?;
        let s = summarise(&t, &sc.bounds, None);
        println!(
            "{name}: max|y| {:.4} rad, max|u| {:?}, soft violation {:.1e}, fallbacks {}",
            s.max_abs_y[0], s.max_abs_u, s.max_soft_violation, s.fallbacks
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
