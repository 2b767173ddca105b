//! Discretise the two built-in plants and the pendulum controller.

use obsmpc::lti::{c2d_tustin, c2d_zoh};
use obsmpc::models::{self, PendulumParams};
use obsmpc::numerics::Mat;

fn show(name: &str, m: &Mat) {
    println!("{name} =");
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:10.5}")).collect();
        println!("  [{}]", row.join(" "));
    }
}

pub fn run_example() -> obsmpc::Result<()> {
    // Satellite: rigid body plus torque disturbance, ZOH at 0.25 s.
    let g = c2d_zoh(&models::satellite_ct()?, models::SATELLITE_TS)?;
    println!("satellite G(z), Ts = {}", g.ts);
    show("A", &g.a);
    show("B", &g.b);
    show("C", &g.c);

    let k = c2d_tustin(&models::pendulum_controller_ct()?, models::PENDULUM_TS)?;
    println!("\npendulum K0(z), Tustin at Ts = {}", k.ts);
    show("A_K", &k.a);
    show("B_K", &k.b);
    show("C_K", &k.c);
    show("D_K", &k.d);
    let dc = k.dc_gain().expect("no pole at z = 1");
    println!(
        "DC gain {:.4} {:.4} (continuous: 0.16, 20)",
        dc[(0, 0)],
        dc[(0, 1)]
    );

    let p = c2d_zoh(
        &models::pendulum_ct(&PendulumParams::default())?,
        models::PENDULUM_TS,
    )?;
    println!("\npendulum G(z) poles:");
    for z in p.poles()? {
        println!("  {:8.4} {:+8.4}j", z.re, z.im);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
