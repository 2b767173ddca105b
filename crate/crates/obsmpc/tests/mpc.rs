mod common;

use common::*;
use obsmpc::mpc::*;
use obsmpc::numerics::{mat, spectral_radius};
use obsmpc::qp::{DualActiveSet, QpStatus};
use obsmpc::runtime::mpc_step;
use obsmpc::scenarios::{
    pendulum_design, satellite_design, HORIZON, PENDULUM_LABELS, SATELLITE_LABELS,
};
use proptest::prelude::*;
use rand::Rng;

struct Instance {
    model: MpcModel,
    kc: Mat,
    x0: Vector,
    horizon: usize,
}

/// Random model with a stabilising-ish K_c; n ≤ 6, N ≤ 10.
fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let nu = r.random_range(1..=2);
    let ny = r.random_range(1..=2);
    let a = contraction(&mut r, n, 1.1);
    let b = normal(&mut r, n, nu);
    let c = normal(&mut r, ny, n);
    let kc = normal(&mut r, nu, n) * 0.2;
    let x0 = normal(&mut r, n, 1).column(0).into_owned();
    Instance {
        model: MpcModel::plain(a, b, c),
        kc,
        x0,
        horizon: r.random_range(1..=10),
    }
}

fn solve(qp: &CondensedQp, theta: &Vector) -> (Vector, obsmpc::runtime::StepDiagnostics) {
    mpc_step(qp, theta, &DualActiveSet::new()).unwrap()
}

#[test]
fn matching_cost_vanishes_on_policy() {
    let mut r = rng(1);
    let kc = normal(&mut r, 2, 4);
    let cost = matching_cost(&kc, &Mat::identity(2, 2)).unwrap();
    for _ in 0..20 {
        let x = normal(&mut r, 4, 1).column(0).into_owned();
        assert!(cost.eval(&x, &(&kc * &x)).abs() < 1e-24 * x.norm_squared().max(1.0));
    }
}

#[test]
fn effect_cost_with_zero_state_weight_is_matching() {
    let mut r = rng(2);
    let kc = normal(&mut r, 2, 3);
    let b = normal(&mut r, 3, 2);
    let r1 = mat(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let e = effect_cost(&kc, &b, &Mat::zeros(3, 3), &r1).unwrap();
    let m = matching_cost(&kc, &r1).unwrap();
    assert_eq!(e.w, m.w);
    let sat = effect_cost(
        &kc,
        &b,
        &(Mat::identity(3, 3) * 1e3),
        &(Mat::identity(2, 2) * 1e-3),
    )
    .unwrap();
    assert!(
        (sat.w.clone() - (Mat::identity(2, 2) * 1e-3 + b.transpose() * &b * 1e3)).amax() < 1e-9
    );
}

#[test]
fn indefinite_weights_are_rejected() {
    let kc = Mat::zeros(1, 2);
    assert!(matching_cost(&kc, &mat(1, 1, &[-1.0])).is_err());
    assert!(matching_cost(&kc, &mat(1, 1, &[0.0])).is_err());
    assert!(effect_cost(
        &kc,
        &Mat::zeros(2, 1),
        &mat(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        &mat(1, 1, &[1.0])
    )
    .is_err());
}

#[test]
fn zero_dare_residual_is_exact() {
    let mut r = rng(3);
    for _ in 0..10 {
        let a = normal(&mut r, 4, 4);
        let b = normal(&mut r, 4, 2);
        let kc = normal(&mut r, 2, 4);
        assert_eq!(check_zero_dare(&a, &b, &kc), 0.0);
    }
}

#[test]
fn single_step_minimiser_is_state_feedback() {
    let inst = instance(5);
    let cfg = MpcConfig::unconstrained(
        1,
        matching_cost(&inst.kc, &Mat::identity(inst.kc.nrows(), inst.kc.nrows())).unwrap(),
    );
    let qp = condense(&inst.model, &cfg, Formulation::CrossTerm).unwrap();
    let theta = qp
        .theta(&inst.x0, &Vector::zeros(0), &Vector::zeros(inst.x0.len()))
        .unwrap();
    // ½vᵀHv + fᵀv with H = 2W, f = −2WK_c x.
    let v = -qp.h.clone().lu().solve(&qp.params(&theta).0).unwrap();
    assert!((v - &inst.kc * &inst.x0).amax() < 1e-12);
}

#[test]
fn case_study_qp_sizes() {
    let s = satellite_design().unwrap();
    let r = s.by_label(SATELLITE_LABELS[2]).unwrap();
    let mut cfg =
        MpcConfig::unconstrained(HORIZON, matching_cost(&r.kc, &Mat::identity(2, 2)).unwrap());
    cfg.u_bounds = vec![Some(Interval::symmetric(0.11)); 2];
    cfg.y_bounds = vec![Some(Interval::symmetric(0.01))];
    let qp = condense(&design_model(&s.pair), &cfg, Formulation::CrossTerm).unwrap();
    assert_eq!((qp.n_decision(), qp.n_constraints()), (45, 90));

    let p = pendulum_design().unwrap();
    let r = p.by_label(PENDULUM_LABELS[1]).unwrap();
    let mut cfg =
        MpcConfig::unconstrained(HORIZON, matching_cost(&r.kc, &Mat::identity(1, 1)).unwrap());
    cfg.x_bounds = vec![
        None,
        Some(Interval::symmetric(0.7)),
        Some(Interval::symmetric(0.175)),
        Some(Interval::symmetric(0.3)),
    ];
    let qp = condense(&design_model(&p.pair), &cfg, Formulation::CrossTerm).unwrap();
    assert_eq!((qp.n_decision(), qp.n_constraints()), (60, 90));
}

#[test]
fn satellite_zero_value_optimum() {
    let s = satellite_design().unwrap();
    let r = s.by_label(SATELLITE_LABELS[2]).unwrap();
    let model = design_model(&s.pair);
    let mut g = rng(8);
    for cost in [
        matching_cost(&r.kc, &Mat::identity(2, 2)).unwrap(),
        effect_cost(
            &r.kc,
            &s.pair.plant.b,
            &(Mat::identity(3, 3) * 1e3),
            &(Mat::identity(2, 2) * 1e-3),
        )
        .unwrap(),
    ] {
        let qp = condense(
            &model,
            &MpcConfig::unconstrained(HORIZON, cost),
            Formulation::CrossTerm,
        )
        .unwrap();
        for _ in 0..10 {
            let x0 = normal(&mut g, 3, 1).column(0).into_owned() * 0.1;
            let theta = qp.theta(&x0, &Vector::zeros(1), &Vector::zeros(3)).unwrap();
            let (v, d) = solve(&qp, &theta);
            assert!(d.objective.abs() <= 1e-9, "{}", d.objective);
            assert!((qp.first_input(&v, &theta) - &r.kc * &x0).amax() < 1e-8);
        }
    }
}

#[test]
fn tracking_with_zero_reference_is_regulation() {
    let inst = instance(21);
    let nu = inst.kc.nrows();
    let cfg = MpcConfig::unconstrained(
        inst.horizon,
        matching_cost(&inst.kc, &Mat::identity(nu, nu)).unwrap(),
    );
    let a = condense(&inst.model, &cfg, Formulation::CrossTerm).unwrap();
    let b = condense(
        &inst.model,
        &build_tracking_cost(&cfg),
        Formulation::CrossTerm,
    )
    .unwrap();
    let n = inst.x0.len();
    let theta = a
        .theta(&inst.x0, &Vector::zeros(0), &Vector::zeros(n))
        .unwrap();
    assert_eq!(a.h, b.h);
    assert!((a.params(&theta).0 - b.params(&theta).0).amax() < 1e-14);
}

#[test]
fn tracking_cost_is_zero_at_shifted_policy() {
    // Equilibrium x_r of A + B K_c·(x − x_r) with x = x_r is any fixed point of A: take A with eigenvalue 1.
    let a = mat(2, 2, &[1.0, 0.1, 0.0, 0.5]);
    let model = MpcModel::plain(a, mat(2, 1, &[0.0, 1.0]), mat(1, 2, &[1.0, 0.0]));
    let kc = mat(1, 2, &[-0.5, -0.8]);
    let cfg = build_tracking_cost(&MpcConfig::unconstrained(
        8,
        matching_cost(&kc, &Mat::identity(1, 1)).unwrap(),
    ));
    let qp = condense(&model, &cfg, Formulation::CrossTerm).unwrap();
    let xr = Vector::from_vec(vec![2.0, 0.0]);
    let theta = qp.theta(&xr, &Vector::zeros(0), &xr).unwrap();
    let (v, d) = solve(&qp, &theta);
    assert!(d.objective.abs() < 1e-12);
    assert!(qp.inputs(&v, &theta).amax() < 1e-9);
}

#[test]
fn prestabilised_zero_input_follows_closed_loop() {
    let inst = instance(30);
    let nu = inst.kc.nrows();
    let cost = matching_cost(&inst.kc, &Mat::identity(nu, nu)).unwrap();
    let (acl, _, w) = prestabilise(&inst.model.a, &inst.model.b, &cost);
    assert_eq!(w, cost.w);
    assert_eq!(acl, &inst.model.a + &inst.model.b * &inst.kc);
    let qp = condense(
        &inst.model,
        &MpcConfig::unconstrained(inst.horizon, cost),
        Formulation::Prestabilised,
    )
    .unwrap();
    let theta = qp
        .theta(&inst.x0, &Vector::zeros(0), &Vector::zeros(inst.x0.len()))
        .unwrap();
    let eta = Vector::zeros(qp.n_decision());
    assert!(qp.objective(&eta, &theta).abs() < 1e-12);
    let u = qp.inputs(&eta, &theta);
    let mut x = inst.x0.clone();
    for k in 0..inst.horizon {
        let uk = u.rows(k * nu, nu).into_owned();
        assert!((&uk - &inst.kc * &x).amax() < 1e-10);
        x = &acl * x;
    }
}

#[test]
fn empty_interval_and_zero_horizon_are_errors() {
    let inst = instance(4);
    let nu = inst.kc.nrows();
    let cost = matching_cost(&inst.kc, &Mat::identity(nu, nu)).unwrap();
    let mut cfg = MpcConfig::unconstrained(0, cost.clone());
    assert!(condense(&inst.model, &cfg, Formulation::CrossTerm).is_err());
    cfg.horizon = 3;
    cfg.u_bounds = vec![Some(Interval { lo: 1.0, hi: -1.0 })];
    assert!(condense(&inst.model, &cfg, Formulation::CrossTerm).is_err());
}

#[test]
fn slacks_vanish_when_hard_bounds_are_met() {
    // Bounds loose enough for the K_c policy itself: the hard problem is feasible at zero cost.
    let mut checked = 0;
    for seed in 0..200u64 {
        let inst = instance(seed);
        let nu = inst.kc.nrows();
        let acl = &inst.model.a + &inst.model.b * &inst.kc;
        if spectral_radius(&acl).unwrap() >= 1.0 {
            continue;
        }
        let mut x = inst.x0.clone();
        let mut peak = Vector::zeros(inst.model.c.nrows());
        for _ in 0..=inst.horizon {
            peak = peak.zip_map(&(&inst.model.c * &x).abs(), f64::max);
            x = &acl * x;
        }
        let mut cfg = MpcConfig::unconstrained(
            inst.horizon,
            matching_cost(&inst.kc, &Mat::identity(nu, nu)).unwrap(),
        );
        cfg.y_bounds = peak
            .iter()
            .map(|p| Some(Interval::symmetric(p * 1.0001 + 1e-9)))
            .collect();
        cfg.u_bounds = vec![Some(Interval::symmetric(1e3)); nu];
        let qp = condense(&inst.model, &cfg, Formulation::CrossTerm).unwrap();
        let theta = qp
            .theta(&inst.x0, &Vector::zeros(0), &Vector::zeros(inst.x0.len()))
            .unwrap();
        let (v, d) = solve(&qp, &theta);
        assert_eq!(d.status, QpStatus::Optimal);
        assert!(qp.slacks(&v).amax() <= 1e-6);
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn tight_output_bound_engages_slack() {
    let inst = instance(9);
    let nu = inst.kc.nrows();
    let mut cfg = MpcConfig::unconstrained(
        inst.horizon.max(3),
        matching_cost(&inst.kc, &Mat::identity(nu, nu)).unwrap(),
    );
    cfg.y_bounds = vec![Some(Interval::symmetric(0.0)); inst.model.c.nrows()];
    cfg.u_bounds = vec![Some(Interval::symmetric(1e-6)); nu];
    let qp = condense(&inst.model, &cfg, Formulation::CrossTerm).unwrap();
    let theta = qp
        .theta(&inst.x0, &Vector::zeros(0), &Vector::zeros(inst.x0.len()))
        .unwrap();
    let (v, d) = solve(&qp, &theta);
    assert_eq!(d.status, QpStatus::Optimal);
    assert!(qp.slacks(&v).amax() > 1e-4);
}

fn stage_check(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let nu = r.random_range(1..=3);
    let kc = normal(&mut r, nu, n);
    let b = normal(&mut r, n, nu);
    let rr = random_spd(&mut r, nu);
    let q1 = random_spd(&mut r, n);
    for cost in [
        matching_cost(&kc, &rr).unwrap(),
        effect_cost(&kc, &b, &q1, &rr).unwrap(),
    ] {
        let j = cost.joint_weight();
        let ev = j.clone().symmetric_eigenvalues();
        prop_assert!(ev.min() >= -1e-10 * j.norm().max(1.0));
        let x = normal(&mut r, n, 1).column(0).into_owned();
        let z = Vector::from_iterator(n + nu, x.iter().copied().chain((&kc * &x).iter().copied()));
        prop_assert!(z.dot(&(&j * &z)).abs() <= 1e-12 * x.norm_squared() * j.norm().max(1.0));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stage_cost_is_psd_with_policy_nullspace(seed in any::<u64>()) {
        stage_check(seed)?;
    }

    #[test]
    fn formulations_agree(seed in any::<u64>(), bounded in any::<bool>()) {
        let inst = instance(seed);
        let nu = inst.kc.nrows();
        let mut cfg = MpcConfig::unconstrained(inst.horizon, matching_cost(&inst.kc, &Mat::identity(nu, nu)).unwrap());
        if bounded {
            let peak = (&inst.kc * &inst.x0).amax();
            cfg.u_bounds = vec![Some(Interval::symmetric(0.5 * peak + 1e-3)); nu];
        }
        let cross = condense(&inst.model, &cfg, Formulation::CrossTerm).unwrap();
        let pre = condense(&inst.model, &cfg, Formulation::Prestabilised).unwrap();
        let theta = cross.theta(&inst.x0, &Vector::zeros(0), &Vector::zeros(inst.x0.len())).unwrap();
        let (v, d1) = solve(&cross, &theta);
        let (vp, d2) = solve(&pre, &theta);
        prop_assert_eq!(d1.status, QpStatus::Optimal);
        prop_assert_eq!(d2.status, QpStatus::Optimal);
        let scale = 1.0 + inst.x0.amax();
        prop_assert!((cross.inputs(&v, &theta) - pre.inputs(&vp, &theta)).amax() <= 1e-8 * scale);
    }

    #[test]
    fn unconstrained_first_move_is_state_feedback(seed in any::<u64>()) {
        let inst = instance(seed);
        let nu = inst.kc.nrows();
        let cfg = MpcConfig::unconstrained(inst.horizon, matching_cost(&inst.kc, &Mat::identity(nu, nu)).unwrap());
        let qp = condense(&inst.model, &cfg, Formulation::CrossTerm).unwrap();
        let theta = qp.theta(&inst.x0, &Vector::zeros(0), &Vector::zeros(inst.x0.len())).unwrap();
        let (v, d) = solve(&qp, &theta);
        prop_assert!(d.objective.abs() <= 1e-9);
        prop_assert!((qp.first_input(&v, &theta) - &inst.kc * &inst.x0).amax() <= 1e-8);
    }
}
