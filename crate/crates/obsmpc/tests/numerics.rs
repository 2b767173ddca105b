mod common;

use approx::assert_relative_eq;
use common::*;
use num_complex::Complex64;
use obsmpc::lti::DtStateSpace;
use obsmpc::numerics::*;
use proptest::prelude::*;

#[test]
fn identity_eigenvalues_are_real() {
    let e = eig_paired(&Mat::identity(2, 2)).unwrap();
    assert!(e
        .values
        .iter()
        .all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    assert!(e.pair_index.iter().all(|p| *p == Pairing::Real));
    assert_eq!(e.group[0], e.group[1]);
}

#[test]
fn rotation_eigenvalues_are_paired() {
    let e = eig_paired(&mat(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap();
    assert!((e.values[0] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    assert!((e.values[1] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
    assert_eq!(e.pair_index, vec![Pairing::Partner(1), Pairing::Partner(0)]);
}

#[test]
fn non_finite_matrix_is_rejected() {
    let m = mat(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
    assert!(matches!(eig_paired(&m), Err(obsmpc::Error::Input(_))));
}

#[test]
fn eig_ordering_is_by_modulus_then_angle() {
    let mut r = rng(3);
    let m = normal(&mut r, 8, 8);
    let e = eig_paired(&m).unwrap();
    for w in e.values.windows(2) {
        assert!(w[0].norm() <= w[1].norm() + 1e-9);
    }
    assert!(e.max_residual(&m) < 1e-9 * m.norm());
    let again = eig_paired(&m).unwrap();
    assert_eq!(e.values, again.values);
}

#[test]
fn lyapunov_trivial_cases() {
    let p = solve_discrete_lyapunov(&Mat::zeros(3, 3), &Mat::identity(3, 3)).unwrap();
    assert_relative_eq!(p, Mat::identity(3, 3), epsilon = 1e-14);
    let p = solve_discrete_lyapunov(&mat(1, 1, &[0.5]), &mat(1, 1, &[1.0])).unwrap();
    assert_relative_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-13);
}

#[test]
fn lyapunov_rejects_unstable() {
    let r = solve_discrete_lyapunov(&mat(1, 1, &[1.0]), &mat(1, 1, &[1.0]));
    assert!(matches!(r, Err(obsmpc::Error::Unstable(_))));
}

#[test]
fn lyapunov_matches_series() {
    let mut r = rng(11);
    let a = contraction(&mut r, 5, 0.8);
    let q = random_spd(&mut r, 5);
    let p = solve_discrete_lyapunov(&a, &q).unwrap();
    let oracle = lyapunov_series(&a, &q, 200);
    assert!((p - oracle).amax() < 1e-7);
}

#[test]
fn lyapunov_residual_on_random_systems() {
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let n = 1 + (seed as usize % 20);
        let rho = 0.1 + 0.89 * (seed as f64 / 99.0);
        let a = contraction(&mut r, n, rho);
        let q = random_spd(&mut r, n);
        let p = solve_discrete_lyapunov(&a, &q).unwrap();
        let res = (&a * &p * a.transpose() - &p + &q).norm();
        assert!(
            res <= 1e-9 * (q.norm() + p.norm()),
            "seed {seed}: residual {res}"
        );
    }
}

#[test]
fn h2_trivial_cases() {
    let d = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let sys = DtStateSpace::static_gain(d.clone(), 0.1).unwrap();
    assert_relative_eq!(h2_norm(&sys).unwrap(), d.norm(), epsilon = 1e-14);
    let sys = DtStateSpace::new(
        mat(1, 1, &[0.5]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[0.0]),
        0.1,
    )
    .unwrap();
    assert_relative_eq!(
        h2_norm(&sys).unwrap(),
        (4.0f64 / 3.0).sqrt(),
        epsilon = 1e-13
    );
}

#[test]
fn h2_rejects_unstable() {
    let sys = DtStateSpace::new(
        mat(1, 1, &[1.2]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[0.0]),
        0.1,
    )
    .unwrap();
    assert!(h2_norm(&sys).is_err());
}

#[test]
fn kalman_zero_process_noise_gives_zero_gain() {
    let k = solve_dare_kalman(
        &mat(1, 1, &[0.5]),
        &mat(1, 1, &[1.0]),
        &mat(1, 1, &[0.0]),
        &mat(1, 1, &[1.0]),
    )
    .unwrap();
    assert!(k.gain[(0, 0)].abs() < 1e-12);
}

#[test]
fn kalman_scalar_matches_fixed_point() {
    // p = p + 1 − p²/(p + 1) iterated to convergence.
    let mut p = 1.0f64;
    for _ in 0..500 {
        p = p + 1.0 - p * p / (p + 1.0);
    }
    assert_relative_eq!(p, (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
    let k = solve_dare_kalman(
        &mat(1, 1, &[1.0]),
        &mat(1, 1, &[1.0]),
        &mat(1, 1, &[1.0]),
        &mat(1, 1, &[1.0]),
    )
    .unwrap();
    assert_relative_eq!(k.covariance[(0, 0)], p, epsilon = 1e-9);
    assert_relative_eq!(k.gain[(0, 0)], p / (p + 1.0), epsilon = 1e-9);
}

#[test]
fn static_loop_margins() {
    let l = DtStateSpace::static_gain(mat(1, 1, &[0.5]), 0.1).unwrap();
    // Loop gain reaches one at twice the gain only when the feedback is regenerative.
    let m = loop_margins(&l, FeedbackSign::Positive).unwrap();
    assert_relative_eq!(m.gain_margin, 2.0, epsilon = 1e-9);
    assert!(m.delay_margin.is_infinite());
    assert!(!m.gain_crossover_found);
    let m = loop_margins(&l, FeedbackSign::Negative).unwrap();
    assert!(m.gain_margin.is_infinite());
    assert!(!m.phase_crossover_found);
}

#[test]
fn integrator_loop_margins() {
    // L(z) = k/(z − 1): crossover where |e^{jω} − 1| = k.
    let k = 0.2;
    let l = DtStateSpace::new(
        mat(1, 1, &[1.0]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[k]),
        mat(1, 1, &[0.0]),
        1.0,
    )
    .unwrap();
    let m = loop_margins(&l, FeedbackSign::Negative).unwrap();
    let wc = 2.0 * (k / 2.0f64).asin();
    let phase = -(std::f64::consts::FRAC_PI_2 + wc / 2.0);
    let pm = std::f64::consts::PI + phase;
    assert!(m.gain_crossover_found);
    assert_relative_eq!(m.crossover_frequency, wc, max_relative = 1e-3);
    assert_relative_eq!(m.phase_margin, pm, max_relative = 1e-3);
    assert_relative_eq!(m.delay_margin, pm / wc, max_relative = 2e-3);
    // Phase reaches −180° at ω = π where |L| = k/2.
    assert_relative_eq!(m.gain_margin, 2.0 / k, max_relative = 1e-3);
}

#[test]
fn kalman_gain_stabilises_random_pairs() {
    for seed in 0..30u64 {
        let mut r = rng(seed);
        let n = 2 + seed as usize % 5;
        let a = normal(&mut r, n, n) * 0.6;
        let c = normal(&mut r, 2, n);
        let k = solve_dare_kalman(&a, &c, &Mat::identity(n, n), &Mat::identity(2, 2)).unwrap();
        assert!(spectral_radius(&(&a - &k.gain * &c)).unwrap() < 1.0);
        assert!(k.residual <= 1e-8);
    }
}

#[test]
fn pinv_and_nullspace() {
    let m = mat(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
    let ns = nullspace(&m, 1e-10);
    assert_eq!(ns.ncols(), 2);
    assert!((&m * &ns).amax() < 1e-12);
    let p = pinv(&m);
    assert!((&m * &p * &m - &m).amax() < 1e-12);
    assert!(cond(&Mat::identity(3, 3)) - 1.0 < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_match_charpoly_roots(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = normal(&mut r, 6, 6);
        let e = eig_paired(&m).unwrap();
        let roots = poly_roots(&charpoly(&m));
        prop_assert!(match_distance(&e.values, &roots) < 1e-8);
        for (i, p) in e.pair_index.iter().enumerate() {
            match p {
                Pairing::Real => prop_assert_eq!(e.values[i].im, 0.0),
                Pairing::Partner(j) => prop_assert_eq!(e.values[*j], e.values[i].conj()),
            }
        }
    }

    #[test]
    fn h2_is_similarity_invariant(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let a = contraction(&mut r, n, 0.9);
        let sys = DtStateSpace::new(a, normal(&mut r, n, 2), normal(&mut r, 2, n), normal(&mut r, 2, 2), 0.1).unwrap();
        let s = Mat::identity(n, n) + normal(&mut r, n, n) * (0.3 / n as f64);
        let h = h2_norm(&sys).unwrap();
        let h_s = h2_norm(&sys.similarity(&s).unwrap()).unwrap();
        prop_assert!((h - h_s).abs() <= 1e-7 * h);
    }

    #[test]
    fn kalman_stabilises(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let a = normal(&mut r, n, n);
        let c = normal(&mut r, 1, n);
        if let Ok(k) = solve_dare_kalman(&a, &c, &Mat::identity(n, n), &mat(1, 1, &[0.5])) {
            prop_assert!(spectral_radius(&(&a - &k.gain * &c)).unwrap() < 1.0);
        }
    }
}
