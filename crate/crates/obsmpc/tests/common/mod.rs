//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use obsmpc::numerics::{Mat, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

/// Random matrix scaled so its largest singular value is `s` (hence spectral radius ≤ s).
pub fn contraction(r: &mut ChaCha8Rng, n: usize, s: f64) -> Mat {
    let a = normal(r, n, n);
    let top = a.clone().singular_values().max();
    a * (s / top)
}

pub fn random_spd(r: &mut ChaCha8Rng, n: usize) -> Mat {
    let m = normal(r, n, n);
    &m * m.transpose() + Mat::identity(n, n) * 0.5
}

/// Characteristic polynomial coefficients (monic, highest degree first) by Faddeev–LeVerrier.
pub fn charpoly(a: &Mat) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = Mat::zeros(n, n);
    let eye = Mat::identity(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        m = a * &m + &eye * c_prev;
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

/// Roots of a monic polynomial by the Durand–Kerner iteration, polished by Newton steps.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex64| {
        coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    };
    let deriv = |z: Complex64| {
        coeffs[..n]
            .iter()
            .enumerate()
            .fold(Complex64::new(0.0, 0.0), |acc, (i, &c)| {
                acc * z + c * (n - i) as f64
            })
    };
    let radius = 1.0 + coeffs[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| seed.powu(k as u32) * radius.min(2.0))
        .collect();
    for _ in 0..2000 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let d = deriv(*zi);
            if d.norm() > 0.0 {
                *zi -= eval(*zi) / d;
            }
        }
    }
    z
}

/// Greedy matching distance between two root sets.
pub fn match_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Σ_{k<terms} Aᵏ Q (Aᵀ)ᵏ.
pub fn lyapunov_series(a: &Mat, q: &Mat, terms: usize) -> Mat {
    let mut p = Mat::zeros(a.nrows(), a.ncols());
    let mut ak = Mat::identity(a.nrows(), a.ncols());
    for _ in 0..terms {
        p += &ak * q * ak.transpose();
        ak = a * ak;
    }
    p
}

/// Matrix exponential by scaling and squaring of a long Taylor series.
pub fn expm_series(a: &Mat) -> Mat {
    let norm = a.norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let n = a.nrows();
    let mut term = Mat::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Minimiser of ½xᵀHx + fᵀx s.t. Ax ≤ b by trying every active set.
pub fn brute_force_qp(h: &Mat, f: &Vector, a: &Mat, b: &Vector) -> Option<(Vector, f64)> {
    let (d, m) = (h.nrows(), a.nrows());
    let mut best: Option<(Vector, f64)> = None;
    for mask in 0u32..(1 << m) {
        let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if act.len() > d {
            continue;
        }
        let k = act.len();
        let mut kkt = Mat::zeros(d + k, d + k);
        kkt.view_mut((0, 0), (d, d)).copy_from(h);
        let mut rhs = Vector::zeros(d + k);
        rhs.rows_mut(0, d).copy_from(&(-f));
        for (r, &i) in act.iter().enumerate() {
            for j in 0..d {
                kkt[(d + r, j)] = a[(i, j)];
                kkt[(j, d + r)] = a[(i, j)];
            }
            rhs[d + r] = b[i];
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            continue;
        }
        let x = sol.rows(0, d).into_owned();
        if (a * &x - b).iter().any(|&g| g > 1e-9) {
            continue;
        }
        let obj = 0.5 * x.dot(&(h * &x)) + f.dot(&x);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((x, obj));
        }
    }
    best
}
