mod common;

use common::*;
use obsmpc::lti::{c2d_zoh, DtStateSpace};
use obsmpc::models::{pendulum_ct, PendulumParams, PENDULUM_TS};
use obsmpc::numerics::mat;
use obsmpc::scenarios::{Library, ScenarioOptions, SCENARIO_NAMES};
use obsmpc::sim::*;
use proptest::prelude::*;

fn linear_scenario(
    controller: DtStateSpace,
    plant: DtStateSpace,
    x0: Vec<f64>,
    duration: f64,
) -> Scenario {
    Scenario {
        name: "test".into(),
        ts: plant.ts,
        plant: PlantModel::LinearDiscrete(plant),
        x0: Vector::from_vec(x0),
        duration,
        references: Vec::new(),
        disturbances: Vec::new(),
        noise: NoiseSpec::default(),
        faults: Vec::new(),
        controller: ControllerSpec::Baseline(controller),
        control_lag_div: None,
        bounds: MonitoredBounds::default(),
    }
}

/// Two-input plant whose second actuator has no effect and a controller that never drives it.
fn two_input_loop() -> Scenario {
    let plant = DtStateSpace::new(
        mat(2, 2, &[0.9, 0.2, 0.0, 0.8]),
        mat(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        mat(1, 2, &[1.0, 0.0]),
        Mat::zeros(1, 2),
        0.1,
    )
    .unwrap();
    let k = DtStateSpace::new(
        mat(1, 1, &[0.5]),
        mat(1, 1, &[1.0]),
        mat(2, 1, &[-0.1, 0.0]),
        mat(2, 1, &[-0.3, 0.0]),
        0.1,
    )
    .unwrap();
    linear_scenario(k, plant, vec![1.0, -1.0], 5.0)
}

fn csv_text(t: &Trace) -> String {
    let mut buf = Vec::new();
    write_csv(t, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn pendulum_equilibria_are_at_rest() {
    let p = PendulumParams::default();
    for th in [0.0, std::f64::consts::PI] {
        let x = Vector::from_vec(vec![2.0, 0.0, th, 0.0]);
        assert!(pendulum_dynamics(&p, &x, 0.0).amax() < 1e-14);
        assert!((rk4_pendulum(&p, &x, 0.0, 1.0, 50) - &x).amax() < 1e-12);
    }
}

#[test]
fn jacobian_matches_linearisation() {
    let p = PendulumParams::default();
    let lin = pendulum_ct(&p).unwrap();
    let h = 1e-6;
    let x0 = Vector::zeros(4);
    for j in 0..4 {
        let mut xp = x0.clone();
        xp[j] += h;
        let mut xm = x0.clone();
        xm[j] -= h;
        let col = (pendulum_dynamics(&p, &xp, 0.0) - pendulum_dynamics(&p, &xm, 0.0)) / (2.0 * h);
        assert!((col - lin.a.column(j)).amax() < 1e-7, "column {j}");
    }
    let bu = (pendulum_dynamics(&p, &x0, h) - pendulum_dynamics(&p, &x0, -h)) / (2.0 * h);
    assert!((bu - lin.b.column(0)).amax() < 1e-7);
}

#[test]
fn unforced_pendulum_conserves_energy() {
    let p = PendulumParams::default();
    let mut x = Vector::from_vec(vec![0.0, 0.3, 0.4, -0.2]);
    let e0 = pendulum_energy(&p, &x);
    let mut drift: f64 = 0.0;
    for _ in 0..100 {
        x = rk4_pendulum(&p, &x, 0.0, PENDULUM_TS, 20);
        drift = drift.max((pendulum_energy(&p, &x) - e0).abs());
    }
    assert!(drift <= 1e-6, "energy drift {drift:.2e}");
}

#[test]
fn small_angle_error_is_cubic() {
    let p = PendulumParams::default();
    let lin = c2d_zoh(&pendulum_ct(&p).unwrap(), PENDULUM_TS).unwrap();
    let gap = |eps: f64| {
        let x0 = Vector::from_vec(vec![0.0, 0.0, eps, 0.0]);
        let (mut xn, mut xl) = (x0.clone(), x0);
        let u = Vector::from_vec(vec![0.0]);
        for _ in 0..10 {
            xn = rk4_pendulum(&p, &xn, 0.0, PENDULUM_TS, 200);
            xl = &lin.a * &xl + &lin.b * &u;
        }
        (xn - xl).amax()
    };
    let (g1, g2) = (gap(1e-3), gap(2e-3));
    let ratio = g2 / g1;
    assert!((7.0..9.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn reference_programs() {
    assert_eq!(ReferenceProgram::constant(2.0).value(-1.0), 2.0);
    let s = ReferenceProgram::step(1.0, 3.0);
    assert_eq!(s.value(0.99), 0.0);
    assert_eq!(s.value(1.0), 3.0);
    assert_eq!(s.value(50.0), 3.0);
    let ramp = ReferenceProgram {
        points: vec![(0.0, 0.0), (2.0, 1.0), (4.0, 1.0)],
    };
    assert!((ramp.value(1.0) - 0.5).abs() < 1e-15);
    assert_eq!(ramp.value(3.0), 1.0);
    assert_eq!(ReferenceProgram::default().value(1.0), 0.0);
}

#[test]
fn simulation_is_bit_deterministic() {
    let lib = Library::new().unwrap();
    let opts = ScenarioOptions {
        duration: Some(6.0),
        noise_sigma: Some(vec![1e-3]),
        seed: Some(11),
        ..Default::default()
    };
    let sc = lib.scenario("satellite-case-4", &opts).unwrap();
    assert_eq!(
        csv_text(&simulate(&sc).unwrap()),
        csv_text(&simulate(&sc).unwrap())
    );
    let other = lib
        .scenario(
            "satellite-case-4",
            &ScenarioOptions {
                seed: Some(12),
                ..opts
            },
        )
        .unwrap();
    assert_ne!(
        csv_text(&simulate(&sc).unwrap()),
        csv_text(&simulate(&other).unwrap())
    );
}

#[test]
fn lock_before_start_holds_for_the_whole_run() {
    let mut sc = two_input_loop();
    sc.faults.push(Fault {
        time: -1.0,
        actuator: 0,
        value: 0.25,
    });
    let t = simulate(&sc).unwrap();
    assert!(t.rows.iter().all(|r| r.u[0] == 0.25));
    assert!(t.rows.iter().skip(1).any(|r| r.u_cmd[0] != 0.25));
}

#[test]
fn lock_on_unused_actuator_changes_nothing() {
    let sc = two_input_loop();
    let mut locked = sc.clone();
    locked.faults.push(Fault {
        time: 1.0,
        actuator: 1,
        value: 0.0,
    });
    assert_eq!(
        csv_text(&simulate(&sc).unwrap()),
        csv_text(&simulate(&locked).unwrap())
    );
}

#[test]
fn invalid_scenarios_are_rejected() {
    let base = two_input_loop();
    let mut bad = vec![base.clone(); 6];
    bad[0].x0 = Vector::zeros(3);
    bad[1].faults.push(Fault {
        time: 0.0,
        actuator: 2,
        value: 0.0,
    });
    bad[2].control_lag_div = Some(10);
    bad[3].noise.sigma = vec![-1.0];
    bad[4].disturbances.push(Disturbance {
        time: 1.0,
        kind: DisturbanceKind::StateStep {
            state: 5,
            value: 1.0,
        },
    });
    bad[5].ts = 0.0;
    for (i, sc) in bad.iter().enumerate() {
        assert!(
            matches!(simulate(sc), Err(obsmpc::Error::Config(_))),
            "case {i}"
        );
    }
    let mut lag = base;
    lag.control_lag_div = Some(1);
    assert!(simulate(&lag).is_err());
}

#[test]
fn disturbances_apply_at_their_time() {
    let mut sc = two_input_loop();
    sc.x0 = Vector::zeros(2);
    sc.disturbances.push(Disturbance {
        time: 1.0,
        kind: DisturbanceKind::StateStep {
            state: 0,
            value: 0.5,
        },
    });
    sc.disturbances.push(Disturbance {
        time: 2.0,
        kind: DisturbanceKind::OutputStep {
            output: 0,
            value: 0.1,
        },
    });
    let t = simulate(&sc).unwrap();
    for r in &t.rows {
        if r.t < 1.0 - 1e-9 {
            assert_eq!(r.x, vec![0.0, 0.0]);
        }
    }
    let at = t.rows.iter().find(|r| (r.t - 1.0).abs() < 1e-9).unwrap();
    assert_eq!(at.x[0], 0.5);
    let at2 = t.rows.iter().find(|r| (r.t - 2.0).abs() < 1e-9).unwrap();
    assert!((at2.y[0] - at2.x[0] - 0.1).abs() < 1e-15);
}

#[test]
fn empty_duration_gives_header_only_csv() {
    let mut sc = two_input_loop();
    sc.duration = 0.0;
    let t = simulate(&sc).unwrap();
    assert!(t.rows.is_empty());
    let text = csv_text(&t);
    assert_eq!(text.lines().count(), 1);
    assert_eq!(
        text.lines().next().unwrap(),
        "t,y.0,u.0,u.1,x.0,x.1,qp.status,qp.obj,qp.nact"
    );
}

#[test]
fn csv_columns_follow_the_fixed_order() {
    let lib = Library::new().unwrap();
    let sc = lib
        .scenario(
            "satellite-case-4",
            &ScenarioOptions {
                duration: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
    let t = simulate(&sc).unwrap();
    let text = csv_text(&t);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let mut want = vec!["t", "y.0", "u.0", "u.1"];
    let xs: Vec<String> = (0..t.n_states).map(|i| format!("x.{i}")).collect();
    let xh: Vec<String> = (0..t.n_estimates).map(|i| format!("xhat.{i}")).collect();
    want.extend(xs.iter().map(String::as_str));
    want.extend(xh.iter().map(String::as_str));
    want.extend(["qp.status", "qp.obj", "qp.nact", "slack.0"]);
    assert_eq!(header, want);
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), want.len());
        assert_eq!(cells[want.len() - 4], "optimal");
    }
    assert_eq!(text.lines().count(), 1 + t.rows.len());
}

#[test]
fn library_lists_every_scenario() {
    let lib = Library::new().unwrap();
    let all = lib.all().unwrap();
    assert_eq!(all.len(), SCENARIO_NAMES.len());
    for (sc, name) in all.iter().zip(SCENARIO_NAMES) {
        assert_eq!(sc.name, name);
        assert_eq!(
            name.ends_with("baseline"),
            matches!(sc.controller, ControllerSpec::Baseline(_))
        );
        if name.starts_with("satellite") {
            assert!(matches!(sc.plant, PlantModel::LinearContinuous(_)));
        } else {
            assert!(matches!(sc.plant, PlantModel::PendulumNonlinear(_)));
        }
    }
    for bad in ["satellite-case-6", "satellite-case-0", "rocket-case-1", ""] {
        assert!(
            lib.scenario(bad, &ScenarioOptions::default()).is_err(),
            "{bad}"
        );
    }
}

#[test]
fn input_bounds_hold_in_every_library_scenario() {
    let lib = Library::new().unwrap();
    for sc in lib.all().unwrap() {
        let t = simulate(&sc).unwrap();
        assert!(!t.diverged, "{}", sc.name);
        let s = summarise(&t, &sc.bounds, None);
        assert!(
            s.max_input_violation <= 1e-9,
            "{}: {}",
            sc.name,
            s.max_input_violation
        );
        assert_eq!(s.fallbacks, 0, "{}", sc.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rk4_substeps_compose(th in -0.5f64..0.5, w in -1.0f64..1.0, f in -5.0f64..5.0) {
        let p = PendulumParams::default();
        let x = Vector::from_vec(vec![0.0, 0.0, th, w]);
        let once = rk4_pendulum(&p, &x, f, 0.2, 2);
        let twice = rk4_pendulum(&p, &rk4_pendulum(&p, &x, f, 0.1, 1), f, 0.1, 1);
        prop_assert!((once - twice).amax() < 1e-14);
    }

    #[test]
    fn summary_bounds_match_trace(seed in 0u64..1000) {
        let mut r = rng(seed);
        let mut sc = two_input_loop();
        sc.x0 = normal(&mut r, 2, 1).column(0).into_owned();
        let t = simulate(&sc).unwrap();
        let s = summarise(&t, &MonitoredBounds::default(), Some(&t));
        let my = t.rows.iter().map(|row| row.y[0].abs()).fold(0.0, f64::max);
        prop_assert_eq!(s.max_abs_y[0], my);
        prop_assert_eq!(s.rms_output_difference, Some(0.0));
        prop_assert_eq!(s.steps, 50);
    }
}
