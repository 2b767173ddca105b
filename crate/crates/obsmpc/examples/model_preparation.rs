//! Model preparation before realisation: dipole insertion for the filter
//! form, loop shifting and the unit-delay alternative for the predictor form.

use num_complex::Complex64;
use obsmpc::lti::{add_dipole, add_unit_delay, closed_loop_matrix, loop_shift};
use obsmpc::models;
use obsmpc::numerics::eigenvalues;

fn print_poles(label: &str, mut p: Vec<Complex64>) {
    p.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let s: Vec<String> = p
        .iter()
        .map(|z| format!("{:.4}{:+.4}j", z.re, z.im))
        .collect();
    println!("{label:28} {}", s.join("  "));
}

pub fn run_example() -> obsmpc::Result<()> {
    let g = models::satellite()?;
    let k0 = models::satellite_controller()?;
    print_poles("satellite, K0", eigenvalues(&closed_loop_matrix(&g, &k0)?)?);
    let k1 = add_dipole(&k0, models::SATELLITE_DIPOLE_W)?;
    print_poles(
        "satellite, K0 with dipole",
        eigenvalues(&closed_loop_matrix(&g, &k1)?)?,
    );
    let at_zero = k1.freq_response(Complex64::new(0.0, 0.0));
    println!(
        "K1(0) = [{:.2e}, {:.2e}]",
        at_zero[(0, 0)].norm(),
        at_zero[(1, 0)].norm()
    );

    let gp = models::pendulum()?;
    let kp = models::pendulum_controller()?;
    let ls = loop_shift(&gp, &kp)?;
    println!(
        "\npendulum D_K = [{:.3}, {:.3}] moved into the plant",
        ls.dk[(0, 0)],
        ls.dk[(0, 1)]
    );
    print_poles(
        "pendulum, loop-shifted",
        eigenvalues(&closed_loop_matrix(&ls.plant, &ls.controller)?)?,
    );
    let kd = add_unit_delay(&kp)?;
    print_poles(
        "pendulum, unit delay",
        eigenvalues(&closed_loop_matrix(&gp, &kd)?)?,
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
