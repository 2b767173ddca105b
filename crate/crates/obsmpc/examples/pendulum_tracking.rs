//! Cart-pendulum 1 m position step with the shaped reference prefilter.
//! Shows the prefilter identities, the single-sample feedthrough transient at
//! t = 0.1 s and the state bounds of Case 2 on the nonlinear plant.

use obsmpc::numerics::Vector;
use obsmpc::runtime::{build_prefilter, PrefilterKind};
use obsmpc::scenarios::{
    pendulum_prefilter_default, pendulum_prefilter_position, Library, ScenarioOptions,
    PENDULUM_LABELS,
};
use obsmpc::sim::{simulate, summarise};

/// Largest violation of L1·x_r = L2·r and K_c·x_r = K_c·x_pre over `steps` samples of a unit step.
pub fn prefilter_identity_error(
    lib: &Library,
    kind: PrefilterKind,
    steps: usize,
) -> obsmpc::Result<(f64, Vec<Vector>)> {
    let r = lib.pendulum.by_label(PENDULUM_LABELS[1])?;
    let PrefilterKind::Shaped { l1, l2 } = kind.clone() else {
        return Ok((0.0, Vec::new()));
    };
    let mut pf = build_prefilter(kind, r, &lib.pendulum.pair)?;
    let reference = Vector::from_vec(vec![1.0, 0.0]);
    let mut worst: f64 = 0.0;
    let mut xs = Vec::new();
    for _ in 0..steps {
        let xr = pf.output(&reference);
        let xpre = pf.raw_output(&reference);
        worst = worst.max((&l1 * &xr - &l2 * &reference).amax());
        worst = worst.max((&r.kc * &xr - &r.kc * &xpre).amax());
        xs.push(xr);
        pf.update(&reference);
    }
    Ok((worst, xs))
}

pub fn run_example() -> obsmpc::Result<()> {
    let lib = Library::new()?;
    let (err, xs) = prefilter_identity_error(&lib, pendulum_prefilter_default(), 200)?;
    let max_other = xs
        .iter()
        .map(|x| x[1].abs().max(x[2].abs()).max(x[3].abs()))
        .fold(0.0, f64::max);
    println!("default shaping: identity error {err:.1e}, max |x_r| over ẋ, θ, θ̇ = {max_other:.1e}");
    let (err, xs) = prefilter_identity_error(&lib, pendulum_prefilter_position(), 200)?;
    let pos = xs.iter().map(|x| (x[0] - 1.0).abs()).fold(0.0, f64::max);
    println!("position shaping: identity error {err:.1e}, max |x_r,1 − r| = {pos:.1e}");

    let opts = ScenarioOptions::default();
    let base_sc = lib.scenario("pendulum-baseline", &opts)?;
    let base = simulate(&base_sc)?;
    let case1 = simulate(&lib.scenario("pendulum-case-1", &opts)?)?;
    let s1 = summarise(&case1, &Default::default(), Some(&base));
    println!(
        "\ncase 1 (unconstrained) vs baseline: RMS output difference {:.2e}",
        s1.rms_output_difference.unwrap_or(0.0)
    );

    let sc2 = lib.scenario("pendulum-case-2", &opts)?;
    let case2 = simulate(&sc2)?;
    println!("case 2 bounds |ẋ| ≤ 0.7, |θ| ≤ 0.175, |θ̇| ≤ 0.3");
    println!(
        "{:>5} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "t", "x", "ẋ", "θ", "θ̇", "u"
    );
    for row in case2.rows.iter().take(8) {
        println!(
            "{:5.1} {:8.4} {:8.4} {:8.4} {:8.4} {:8.3}",
            row.t, row.x[0], row.x[1], row.x[2], row.x[3], row.u[0]
        );
    }
    let after: Vec<_> = case2.rows.iter().filter(|r| r.t > 0.1 + 1e-9).collect();
    let worst = |i: usize, lim: f64| after.iter().map(|r| r.x[i].abs() / lim).fold(0.0, f64::max);
    println!(
        "after t = 0.1: max |ẋ|/0.7 = {:.3}, |θ|/0.175 = {:.3}, |θ̇|/0.3 = {:.3}; final x = {:.4}",
        worst(1, 0.7),
        worst(2, 0.175),
        worst(3, 0.3),
        case2.rows.last().map_or(f64::NAN, |r| r.x[0])
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
