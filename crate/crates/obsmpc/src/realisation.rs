//! Observer-based realisations of an existing controller.
//!
//! Every solution T of [−T I]·A_cl·[I; T] = 0 with full row rank gives an
//! observer plus static gain K_c that reproduces the controller exactly. The
//! solutions are enumerated from invariant subspaces of A_cl, scored, and ranked.

use nalgebra::SVD;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{
    add_dipole, add_unit_delay, closed_loop_matrix, loop_shift, uncontrollable_modes, DtStateSpace,
};
use crate::numerics::{
    cond, eig_paired, eigenvalues, h2_norm, hcat, inverse, loop_margins, nullspace, pinv, rows,
    solve_dare_kalman, spectral_radius, vcat, EigenStructure, FeedbackSign, LoopMargins, Mat,
    Pairing,
};

/// Observer type: filter uses y(k) in x̂(k|k), predictor produces x̂(k+1|k).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Filter,
    Predictor,
}

/// Which closed-loop eigenvalues go to state feedback (S) and which to the observer error (O).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RealisationChoice {
    pub state_feedback_set: Vec<usize>,
    pub observer_set: Vec<usize>,
}

impl RealisationChoice {
    /// "S"/"O" label per eigenvalue index, as in the realisation tables.
    pub fn labels(&self) -> String {
        let n = self.state_feedback_set.len() + self.observer_set.len();
        (0..n)
            .map(|i| {
                if self.state_feedback_set.contains(&i) {
                    'S'
                } else {
                    'O'
                }
            })
            .collect()
    }
}

/// One solution of the non-symmetric Riccati equation, turned into observer gains.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObserverRealisation {
    pub form: Form,
    #[serde(with = "rows")]
    pub t: Mat,
    #[serde(with = "rows")]
    pub t_perp: Mat,
    /// Free-pole gain, (n − n_K) × n_K.
    #[serde(with = "rows")]
    pub x: Mat,
    #[serde(with = "rows")]
    pub kc: Mat,
    #[serde(with = "rows")]
    pub kf: Mat,
    pub choice: RealisationChoice,
    pub riccati_residual: f64,
    /// Observer-error modes introduced through T⊥ (empty when n_K = n).
    pub extra_poles: Vec<[f64; 2]>,
}

/// Plant and controller in the shape the chosen form needs.
#[derive(Clone, Debug)]
pub struct DesignPair {
    pub form: Form,
    /// Plant model seen by the observer (loop-shifted for the predictor form).
    pub plant: DtStateSpace,
    /// Controller realised by the observer (dipole-augmented or loop-shifted).
    pub controller: DtStateSpace,
    /// Feedthrough applied outside the observer (u = D·y + ũ); zero unless loop-shifted.
    pub outer_feedthrough: Mat,
}

/// How the direct feedthrough of a predictor-form controller is removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayHandling {
    LoopShift,
    UnitDelay,
}

/// Builds the plant/controller pair for the requested form.
///
/// Filter form needs K(0) = 0; `dipole` adds Wz/(Wz − 1) on each input when given.
/// Predictor form needs a strictly proper controller; feedthrough is removed by
/// loop shifting or a unit delay.
pub fn prepare(
    form: Form,
    plant: &DtStateSpace,
    controller: &DtStateSpace,
    dipole: Option<f64>,
    delay: DelayHandling,
) -> Result<DesignPair> {
    let zero_out = Mat::zeros(controller.n_outputs(), controller.n_inputs());
    match form {
        Form::Filter => {
            let k = match dipole {
                Some(w) => add_dipole(controller, w)?,
                None => controller.clone(),
            };
            Ok(DesignPair {
                form,
                plant: plant.clone(),
                controller: k,
                outer_feedthrough: zero_out,
            })
        }
        Form::Predictor => {
            if controller.is_strictly_proper() {
                return Ok(DesignPair {
                    form,
                    plant: plant.clone(),
                    controller: controller.clone(),
                    outer_feedthrough: zero_out,
                });
            }
            match delay {
                DelayHandling::LoopShift => {
                    let ls = loop_shift(plant, controller)?;
                    Ok(DesignPair {
                        form,
                        plant: ls.plant,
                        controller: ls.controller,
                        outer_feedthrough: ls.dk,
                    })
                }
                DelayHandling::UnitDelay => Ok(DesignPair {
                    form,
                    plant: plant.clone(),
                    controller: add_unit_delay(controller)?,
                    outer_feedthrough: zero_out,
                }),
            }
        }
    }
}

impl DesignPair {
    pub fn closed_loop(&self) -> Result<Mat> {
        closed_loop_matrix(&self.plant, &self.controller)
    }

    /// Controller as it acts on the physical loop (outer feedthrough included).
    pub fn effective_controller(&self) -> DtStateSpace {
        let mut k = self.controller.clone();
        k.d = &k.d + &self.outer_feedthrough;
        k
    }
}

/// Enumerates every admissible S/O split.
///
/// Conjugate pairs and repeated blocks move together; `forced_s` indices
/// (with their blocks) always go to S. Order is lexicographic in the atom list,
/// which follows the eigenvalue ordering.
pub fn enumerate_choices(
    eig: &EigenStructure,
    n: usize,
    n_k: usize,
    forced_s: &[usize],
) -> Result<Vec<RealisationChoice>> {
    let total = eig.len();
    if n + n_k != total {
        return Err(Error::Input(format!(
            "expected {} eigenvalues, got {total}",
            n + n_k
        )));
    }
    let atoms = atoms(eig);
    let mut forced_atoms = Vec::new();
    let mut free_atoms = Vec::new();
    for a in atoms {
        if a.iter().any(|i| forced_s.contains(i)) {
            forced_atoms.push(a);
        } else {
            free_atoms.push(a);
        }
    }
    let forced: Vec<usize> = forced_atoms.concat();
    if forced.len() > n {
        return Err(Error::Infeasible(format!(
            "{} eigenvalues are forced into the state-feedback set but it only holds {n}",
            forced.len()
        )));
    }
    let need = n - forced.len();
    let mut out = Vec::new();
    let mut pick = Vec::new();
    fn rec(
        atoms: &[Vec<usize>],
        start: usize,
        need: usize,
        pick: &mut Vec<usize>,
        forced: &[usize],
        total: usize,
        out: &mut Vec<RealisationChoice>,
    ) {
        if need == 0 {
            let mut s: Vec<usize> = forced.to_vec();
            for &a in pick.iter() {
                s.extend_from_slice(&atoms[a]);
            }
            s.sort_unstable();
            let o: Vec<usize> = (0..total).filter(|i| !s.contains(i)).collect();
            out.push(RealisationChoice {
                state_feedback_set: s,
                observer_set: o,
            });
            return;
        }
        let remaining: usize = atoms[start..].iter().map(|a| a.len()).sum();
        if remaining < need {
            return;
        }
        for a in start..atoms.len() {
            if atoms[a].len() <= need {
                pick.push(a);
                rec(
                    atoms,
                    a + 1,
                    need - atoms[a].len(),
                    pick,
                    forced,
                    total,
                    out,
                );
                pick.pop();
            }
        }
    }
    rec(&free_atoms, 0, need, &mut pick, &forced, total, &mut out);
    Ok(out)
}

/// Index sets that must stay together: repeated blocks closed under conjugation.
fn atoms(eig: &EigenStructure) -> Vec<Vec<usize>> {
    let n = eig.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let mut set = vec![i];
        let mut k = 0;
        while k < set.len() {
            let j = set[k];
            let mut add = eig.block_of(j);
            if let Pairing::Partner(p) = eig.pair_index[j] {
                add.push(p);
            }
            for a in add {
                if !set.contains(&a) {
                    set.push(a);
                }
            }
            k += 1;
        }
        set.sort_unstable();
        for &j in &set {
            seen[j] = true;
        }
        out.push(set);
    }
    out
}

/// Why a choice produced no realisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Infeasibility {
    IllConditioned { cond: f64 },
    Residual { residual: f64 },
    RankDeficient { ratio: f64 },
    ComplexSplit,
    Invariant { detail: String },
    Design { detail: String },
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasibility::IllConditioned { cond } => {
                write!(f, "U1 ill-conditioned (cond {cond:.3e})")
            }
            Infeasibility::Residual { residual } => {
                write!(f, "Riccati residual {residual:.3e} too large")
            }
            Infeasibility::RankDeficient { ratio } => {
                write!(f, "T rank deficient (sigma ratio {ratio:.3e})")
            }
            Infeasibility::ComplexSplit => write!(f, "conjugate pair split; no real T"),
            Infeasibility::Invariant { detail } => write!(f, "invariant check failed: {detail}"),
            Infeasibility::Design { detail } => write!(f, "{detail}"),
        }
    }
}

/// A Riccati solution with its residual.
#[derive(Clone, Debug)]
pub struct TSolution {
    pub t: Mat,
    pub residual: f64,
}

/// Backward-error bound for the Riccati residual: 1e-9·‖A_cl‖·(1 + ‖T‖)².
pub fn residual_tolerance(acl: &Mat, t: &Mat) -> f64 {
    1e-9 * acl.norm().max(1.0) * (1.0 + t.norm()).powi(2)
}

pub fn riccati_residual(acl: &Mat, t: &Mat) -> f64 {
    let (nk, n) = t.shape();
    let left = hcat(&[&(-t), &Mat::identity(nk, nk)]);
    let right = vcat(&[&Mat::identity(n, n), t]);
    (left * acl * right).norm()
}

/// T = U₂·U₁⁻¹ from the (realified) S-set eigenvectors.
pub fn solve_t(
    acl: &Mat,
    n: usize,
    choice: &RealisationChoice,
    eig: &EigenStructure,
) -> std::result::Result<TSolution, Infeasibility> {
    let s = &choice.state_feedback_set;
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    for &i in s {
        match eig.pair_index[i] {
            Pairing::Real => cols.push(eig.vectors.column(i).map(|z| z.re)),
            Pairing::Partner(j) => {
                if !s.contains(&j) {
                    return Err(Infeasibility::ComplexSplit);
                }
                if eig.values[i].im > 0.0 {
                    let v = eig.vectors.column(i);
                    cols.push(v.map(|z| z.re));
                    cols.push(v.map(|z| z.im));
                }
            }
        }
    }
    if cols.len() != n {
        return Err(Infeasibility::Invariant {
            detail: format!("S set spans {} columns, need {n}", cols.len()),
        });
    }
    solve_t_from_basis(acl, n, &Mat::from_columns(&cols))
}

/// T = U₂·U₁⁻¹ for an explicit real basis `u` (columns) of an invariant subspace of A_cl.
pub fn solve_t_from_basis(
    acl: &Mat,
    n: usize,
    u: &Mat,
) -> std::result::Result<TSolution, Infeasibility> {
    let total = acl.nrows();
    if u.shape() != (total, n) {
        return Err(Infeasibility::Invariant {
            detail: format!("basis is {}×{}, need {total}×{n}", u.nrows(), u.ncols()),
        });
    }
    let u1 = u.view((0, 0), (n, n)).into_owned();
    let u2 = u.view((n, 0), (total - n, n)).into_owned();
    let c = cond(&u1);
    if !(c <= 1e10) {
        return Err(Infeasibility::IllConditioned { cond: c });
    }
    let u1i = u1.try_inverse().ok_or(Infeasibility::IllConditioned {
        cond: f64::INFINITY,
    })?;
    let t = u2 * u1i;
    let residual = riccati_residual(acl, &t);
    if residual > residual_tolerance(acl, &t) {
        return Err(Infeasibility::Residual { residual });
    }
    if t.nrows() > 0 {
        let sv = t.clone().singular_values();
        let ratio = sv.min() / sv.max().max(f64::MIN_POSITIVE);
        if !(ratio > 1e-8) {
            return Err(Infeasibility::RankDeficient { ratio });
        }
    }
    Ok(TSolution { t, residual })
}

/// Free-pole design on the reduced system of Theorem 5.
#[derive(Clone, Debug)]
pub struct FreePoles {
    pub t_perp: Mat,
    pub x: Mat,
    pub reduced_a: Mat,
    pub reduced_c: Mat,
    pub poles: Vec<Complex64>,
}

/// Reduced pair (T⊥ᵀ·Ã·T⊥, B_K·C·T⊥) with Ã = A + B·D_K·C.
pub fn reduced_system(pair: &DesignPair, t: &Mat) -> (Mat, Mat, Mat) {
    let g = &pair.plant;
    let k = &pair.controller;
    let t_perp = nullspace(t, 1e-10);
    let at = &g.a + &g.b * &k.d * &g.c;
    let ar = t_perp.transpose() * at * &t_perp;
    let cr = &k.b * &g.c * &t_perp;
    (t_perp, ar, cr)
}

/// X as the steady-state Kalman gain of the reduced system with process
/// covariance qn·I on every reduced state and measurement covariance rn·I.
pub fn design_free_poles(pair: &DesignPair, t: &Mat, qn: f64, rn: f64) -> Result<FreePoles> {
    let (t_perp, ar, cr) = reduced_system(pair, t);
    let m = ar.nrows();
    if m == 0 {
        return Ok(FreePoles {
            t_perp,
            x: Mat::zeros(0, t.nrows()),
            reduced_a: ar,
            reduced_c: cr,
            poles: Vec::new(),
        });
    }
    let fixed: Vec<Complex64> = crate::lti::unobservable_modes(&ar, &cr)?
        .into_iter()
        .filter(|z| z.norm() >= 1.0)
        .collect();
    if !fixed.is_empty() {
        let names: Vec<String> = fixed
            .iter()
            .map(|z| format!("{:.4}{:+.4}j", z.re, z.im))
            .collect();
        return Err(Error::Precondition(format!(
            "reduced free-pole system is undetectable: fixed modes {}",
            names.join(", ")
        )));
    }
    let q = Mat::identity(m, m) * qn;
    let r = Mat::identity(cr.nrows(), cr.nrows()) * rn;
    let kal = solve_dare_kalman(&ar, &cr, &q, &r)?;
    let x = kal.gain;
    let poles = eigenvalues(&(&ar - &x * &cr))?;
    Ok(FreePoles {
        t_perp,
        x,
        reduced_a: ar,
        reduced_c: cr,
        poles,
    })
}

fn k_at_zero_is_zero(k: &DtStateSpace) -> Result<bool> {
    let k0 = k.freq_response(Complex64::new(0.0, 0.0)).map(|z| z.norm());
    let scale = 1.0 + k.d.norm() + k.c.norm() * k.b.norm();
    Ok(k0.iter().all(|v| v.is_finite()) && k0.max() <= 1e-10 * scale)
}

/// Filter-form or predictor-form gains for a given T and X.
pub fn build_realisation(
    pair: &DesignPair,
    choice: &RealisationChoice,
    sol: &TSolution,
    fp: &FreePoles,
) -> Result<ObserverRealisation> {
    let g = &pair.plant;
    let k = &pair.controller;
    let t = &sol.t;
    let tdag = pinv(t) + &fp.t_perp * &fp.x;
    let (kc, kf) = match pair.form {
        Form::Filter => {
            if !k_at_zero_is_zero(k)? {
                return Err(Error::Precondition(
                    "filter form needs K(0)=0; add a dipole".into(),
                ));
            }
            if g.a.determinant().abs() <= 1e-12 * g.a.norm().max(1.0).powi(g.n() as i32) {
                return Err(Error::Precondition(
                    "filter form needs a nonsingular plant A".into(),
                ));
            }
            if k.n() > 0
                && k.a.determinant().abs() <= 1e-12 * k.a.norm().max(1.0).powi(k.n() as i32)
            {
                return Err(Error::Precondition(
                    "filter form needs a nonsingular controller A_K".into(),
                ));
            }
            let kc = &k.d * &g.c + &k.c * t;
            let ai = inverse(&g.a, "plant A")?;
            let kf = ai * (&tdag * &k.b - &g.b * &k.d);
            (kc, kf)
        }
        Form::Predictor => {
            if !k.is_strictly_proper() {
                return Err(Error::Precondition(
                    "predictor form needs a strictly proper controller; loop-shift or delay it"
                        .into(),
                ));
            }
            (&k.c * t, &tdag * &k.b)
        }
    };
    let extra_poles = fp.poles.iter().map(|z| [z.re, z.im]).collect();
    Ok(ObserverRealisation {
        form: pair.form,
        t: t.clone(),
        t_perp: fp.t_perp.clone(),
        x: fp.x.clone(),
        kc,
        kf,
        choice: choice.clone(),
        riccati_residual: sol.residual,
        extra_poles,
    })
}

/// Greedy multiset distance between two spectra.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("equal lengths");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Checks the structural invariants of a realisation; returns a description of the first failure.
pub fn check_invariants(
    pair: &DesignPair,
    r: &ObserverRealisation,
    eig: &EigenStructure,
    acl: &Mat,
) -> Option<String> {
    let g = &pair.plant;
    let scale = acl.norm().max(1.0);
    if r.riccati_residual > residual_tolerance(acl, &r.t) {
        return Some(format!("Riccati residual {:.3e}", r.riccati_residual));
    }
    let s_vals: Vec<Complex64> = r
        .choice
        .state_feedback_set
        .iter()
        .map(|&i| eig.values[i])
        .collect();
    match eigenvalues(&(&g.a + &g.b * &r.kc)) {
        Ok(sf) => {
            let d = spectrum_distance(&sf, &s_vals);
            if d > 1e-7 * scale {
                return Some(format!(
                    "spectrum(A+B Kc) differs from the S set by {d:.3e}"
                ));
            }
        }
        Err(e) => return Some(e.to_string()),
    }
    if r.form == Form::Filter {
        let d = (&r.kc * &r.kf - &pair.controller.d).norm();
        if d > 1e-8 * pair.controller.d.norm().max(1.0) {
            return Some(format!("Kc Kf differs from D_K by {d:.3e}"));
        }
    }
    if r.t_perp.ncols() > 0 {
        let ortho = (r.t_perp.transpose() * &r.t_perp
            - Mat::identity(r.t_perp.ncols(), r.t_perp.ncols()))
        .norm();
        let null = (&r.t * &r.t_perp).norm();
        if ortho > 1e-10 || null > 1e-10 * r.t.norm().max(1.0) {
            return Some(format!(
                "T_perp not an orthonormal nullspace basis ({ortho:.2e}, {null:.2e})"
            ));
        }
    }
    None
}

/// The n-state observer-based controller from y to u, outer feedthrough included.
pub fn realisation_controller(r: &ObserverRealisation, pair: &DesignPair) -> Result<DtStateSpace> {
    gains_controller(r.form, pair, &r.kc, &r.kf)
}

/// Observer-based controller for arbitrary gains (K_c, K_f) on a design pair.
pub fn gains_controller(form: Form, pair: &DesignPair, kc: &Mat, kf: &Mat) -> Result<DtStateSpace> {
    let g = &pair.plant;
    let n = g.n();
    if kc.shape() != (g.n_inputs(), n) || kf.shape() != (n, g.n_outputs()) {
        return Err(crate::error::dim(format!(
            "gains must be K_c {}×{n} and K_f {n}×{}",
            g.n_inputs(),
            g.n_outputs()
        )));
    }
    let eye = Mat::identity(n, n);
    match form {
        Form::Filter => {
            let acl = &g.a + &g.b * kc;
            let m = &eye - kf * &g.c;
            DtStateSpace::new(
                &acl * &m,
                &acl * kf,
                kc * &m,
                kc * kf + &pair.outer_feedthrough,
                g.ts,
            )
        }
        Form::Predictor => DtStateSpace::new(
            &g.a - kf * &g.c + &g.b * kc,
            kf.clone(),
            kc.clone(),
            pair.outer_feedthrough.clone(),
            g.ts,
        ),
    }
}

fn spectral_norm(m: &crate::numerics::CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false).singular_values.max()
}

/// Largest relative transfer-function mismatch over a log grid in (0, π/Ts].
pub fn verify_equivalence(k_obs: &DtStateSpace, k0: &DtStateSpace, n_freq: usize) -> Result<f64> {
    if k_obs.n_inputs() != k0.n_inputs() || k_obs.n_outputs() != k0.n_outputs() {
        return Err(crate::error::dim(
            "verify_equivalence: I/O dimensions differ",
        ));
    }
    let nyq = std::f64::consts::PI / k0.ts;
    let n_freq = n_freq.max(2);
    let mut worst: f64 = 0.0;
    for i in 0..n_freq {
        let w = nyq * 10f64.powf(-4.0 + 4.0 * i as f64 / (n_freq - 1) as f64);
        let z = Complex64::from_polar(1.0, w * k0.ts);
        let a = k_obs.freq_response(z);
        let b = k0.freq_response(z);
        let e = spectral_norm(&(&a - &b)) / (1.0 + spectral_norm(&b));
        worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
    }
    Ok(worst)
}

/// Which noise transfer function enters the ranking metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMetric {
    /// y → ŷ: measurement noise reaching the output estimate.
    OutputEstimate,
    /// y → ŷ − y.
    Innovation,
}

/// Quality metrics of one realisation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealisationScore {
    /// The noise norm used for ranking (see `NoiseMetric`).
    pub h2_noise: f64,
    pub h2_output_estimate: f64,
    pub h2_innovation: f64,
    /// Disturbance-to-estimate norm; `None` when the model has no disturbance states.
    pub h2_dist: Option<f64>,
    pub product: f64,
    pub margins: Option<LoopMargins>,
}

fn h2_or_inf(sys: Result<DtStateSpace>) -> f64 {
    sys.and_then(|s| h2_norm(&s)).unwrap_or(f64::INFINITY)
}

/// Observer error state matrix: A(I − K_f C) (filter) or Ã − K_f C̃ (predictor).
pub fn observer_matrix(r: &ObserverRealisation, plant: &DtStateSpace) -> Mat {
    let n = plant.n();
    match r.form {
        Form::Filter => &plant.a * (Mat::identity(n, n) - &r.kf * &plant.c),
        Form::Predictor => &plant.a - &r.kf * &plant.c,
    }
}

/// Scores a realisation; `disturbance_states` are the trailing plant states fed by d.
pub fn score_realisation(
    r: &ObserverRealisation,
    pair: &DesignPair,
    disturbance_states: usize,
    metric: NoiseMetric,
    margin_channel: Option<usize>,
) -> Result<RealisationScore> {
    let g = &pair.plant;
    let n = g.n();
    let ny = g.n_outputs();
    let ts = g.ts;
    let eye_y = Mat::identity(ny, ny);
    let ae = observer_matrix(r, g);
    let (b, c, d0) = match r.form {
        Form::Filter => {
            let m = Mat::identity(n, n) - &r.kf * &g.c;
            (&g.a * &r.kf, &g.c * m, &g.c * &r.kf)
        }
        Form::Predictor => (r.kf.clone(), g.c.clone(), Mat::zeros(ny, ny)),
    };
    let h2_output_estimate = h2_or_inf(DtStateSpace::new(
        ae.clone(),
        b.clone(),
        c.clone(),
        d0.clone(),
        ts,
    ));
    let h2_innovation = h2_or_inf(DtStateSpace::new(ae.clone(), b, c, d0 - eye_y, ts));
    let h2_dist = if disturbance_states > 0 {
        if disturbance_states > n {
            return Err(Error::Input(
                "more disturbance states than plant states".into(),
            ));
        }
        let nd = disturbance_states;
        let mut bd = Mat::zeros(n, nd);
        bd.view_mut((n - nd, 0), (nd, nd)).fill_with_identity();
        let dd = -&bd;
        Some(h2_or_inf(DtStateSpace::new(
            ae,
            bd,
            Mat::identity(n, n),
            dd,
            ts,
        )))
    } else {
        None
    };
    let h2_noise = match metric {
        NoiseMetric::OutputEstimate => h2_output_estimate,
        NoiseMetric::Innovation => h2_innovation,
    };
    let product = h2_noise * h2_dist.unwrap_or(1.0);
    let margins = match margin_channel {
        Some(ch) => {
            let l = cut_loop(r, pair, ch)?;
            Some(loop_margins(&l, FeedbackSign::Positive)?)
        }
        None => None,
    };
    Ok(RealisationScore {
        h2_noise,
        h2_output_estimate,
        h2_innovation,
        h2_dist,
        product,
        margins,
    })
}

/// Loop broken at plant input `channel`, just after the control computation.
///
/// Input: the injected actuator signal. Output: the commanded value on the
/// same channel. The remaining channels stay closed. States [x; x̂].
pub fn cut_loop(
    r: &ObserverRealisation,
    pair: &DesignPair,
    channel: usize,
) -> Result<DtStateSpace> {
    let g = &pair.plant;
    let (n, nu) = (g.n(), g.n_inputs());
    if channel >= nu {
        return Err(Error::Input(format!(
            "margin channel {channel} out of range (plant has {nu} inputs)"
        )));
    }
    let mut e = Mat::zeros(nu, 1);
    e[(channel, 0)] = 1.0;
    let p = Mat::identity(nu, nu) - &e * e.transpose();
    let eye = Mat::identity(n, n);
    // u_cmd = ux·x + ue·x̂ ; x̂⁺ = ox·x + oe·x̂ + B·u_applied
    let (ux, ue, ox, oe) = match r.form {
        Form::Filter => {
            let m = &eye - &r.kf * &g.c;
            (
                &r.kc * &r.kf * &g.c,
                &r.kc * &m,
                &g.a * &r.kf * &g.c,
                &g.a * &m,
            )
        }
        // With loop shifting the plant model already contains the outer feedthrough.
        Form::Predictor => (
            Mat::zeros(nu, n),
            r.kc.clone(),
            &r.kf * &g.c,
            &g.a - &r.kf * &g.c,
        ),
    };
    // u_applied = e·w + P·u_cmd
    let bp = &g.b * &p;
    let a = crate::numerics::block2(
        &(&g.a + &bp * &ux),
        &(&bp * &ue),
        &(&ox + &bp * &ux),
        &(&oe + &bp * &ue),
    );
    let be = &g.b * &e;
    let b = vcat(&[&be, &be]);
    let c = hcat(&[&(e.transpose() * &ux), &(e.transpose() * &ue)]);
    DtStateSpace::new(a, b, c, Mat::zeros(1, 1), g.ts)
}

/// Options for `search_realisations`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOptions {
    pub qn: f64,
    pub rn: f64,
    #[serde(default)]
    pub forced_s: Vec<usize>,
    /// Force modes of A that are uncontrollable from the plant input into S.
    #[serde(default = "yes")]
    pub force_uncontrollable: bool,
    #[serde(default)]
    pub disturbance_states: usize,
    pub noise_metric: NoiseMetric,
    #[serde(default)]
    pub margin_channel: Option<usize>,
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            qn: 1.0,
            rn: 1e7,
            forced_s: Vec::new(),
            force_uncontrollable: true,
            disturbance_states: 0,
            noise_metric: NoiseMetric::OutputEstimate,
            margin_channel: None,
            parallel: true,
        }
    }
}

/// A feasible realisation with its score and equivalence check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankedRealisation {
    pub index: usize,
    pub realisation: ObserverRealisation,
    pub score: RealisationScore,
}

/// A choice that produced no realisation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RejectedChoice {
    pub index: usize,
    pub choice: RealisationChoice,
    pub reason: String,
}

/// Result of a full realisation search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchReport {
    pub closed_loop_poles: Vec<[f64; 2]>,
    pub forced_s: Vec<usize>,
    pub n_choices: usize,
    /// Feasible realisations, best first.
    pub ranked: Vec<RankedRealisation>,
    pub rejected: Vec<RejectedChoice>,
}

/// Closed-loop eigenvalue indices that must sit in the state-feedback set
/// because they are uncontrollable modes of the plant.
pub fn forced_uncontrollable(pair: &DesignPair, eig: &EigenStructure) -> Result<Vec<usize>> {
    let modes = uncontrollable_modes(&pair.plant.a, &pair.plant.b)?;
    let mut out = Vec::new();
    for m in modes {
        let best = (0..eig.len())
            .filter(|i| !out.contains(i))
            .min_by(|&a, &b| {
                (eig.values[a] - m)
                    .norm()
                    .total_cmp(&(eig.values[b] - m).norm())
            });
        if let Some(i) = best {
            if (eig.values[i] - m).norm() <= 1e-6 * m.norm().max(1.0) {
                out.push(i);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Solves, builds and scores a single choice.
pub fn realise_choice(
    pair: &DesignPair,
    acl: &Mat,
    eig: &EigenStructure,
    choice: &RealisationChoice,
    opts: &SearchOptions,
) -> std::result::Result<(ObserverRealisation, RealisationScore), Infeasibility> {
    let n = pair.plant.n();
    let sol = solve_t(acl, n, choice, eig)?;
    let fp =
        design_free_poles(pair, &sol.t, opts.qn, opts.rn).map_err(|e| Infeasibility::Design {
            detail: e.to_string(),
        })?;
    let r = build_realisation(pair, choice, &sol, &fp).map_err(|e| Infeasibility::Design {
        detail: e.to_string(),
    })?;
    if let Some(detail) = check_invariants(pair, &r, eig, acl) {
        return Err(Infeasibility::Invariant { detail });
    }
    let score = score_realisation(
        &r,
        pair,
        opts.disturbance_states,
        opts.noise_metric,
        opts.margin_channel,
    )
    .map_err(|e| Infeasibility::Design {
        detail: e.to_string(),
    })?;
    Ok((r, score))
}

/// Enumerates, solves, scores and ranks every admissible realisation.
pub fn search_realisations(pair: &DesignPair, opts: &SearchOptions) -> Result<SearchReport> {
    let acl = pair.closed_loop()?;
    let eig = eig_paired(&acl)?;
    let n = pair.plant.n();
    let n_k = pair.controller.n();
    let mut forced = opts.forced_s.clone();
    if opts.force_uncontrollable {
        for i in forced_uncontrollable(pair, &eig)? {
            if !forced.contains(&i) {
                forced.push(i);
            }
        }
    }
    forced.sort_unstable();
    let choices = enumerate_choices(&eig, n, n_k, &forced)?;
    let work = |(i, c): (usize, &RealisationChoice)| (i, realise_choice(pair, &acl, &eig, c, opts));
    let results: Vec<_> = if opts.parallel {
        choices.par_iter().enumerate().map(work).collect()
    } else {
        choices.iter().enumerate().map(work).collect()
    };
    let mut ranked = Vec::new();
    let mut rejected = Vec::new();
    for (index, res) in results {
        match res {
            Ok((realisation, score)) => ranked.push(RankedRealisation {
                index,
                realisation,
                score,
            }),
            Err(why) => rejected.push(RejectedChoice {
                index,
                choice: choices[index].clone(),
                reason: why.to_string(),
            }),
        }
    }
    if ranked.is_empty() {
        let mut causes: Vec<String> = rejected.iter().map(|r| r.reason.clone()).collect();
        causes.sort();
        causes.dedup();
        return Err(Error::Infeasible(format!(
            "no feasible realisation among {} choices: {}",
            choices.len(),
            causes.join("; ")
        )));
    }
    ranked.sort_by(|a, b| {
        let (pa, pb) = (a.score.product, b.score.product);
        let ka = if pa.is_nan() { f64::INFINITY } else { pa };
        let kb = if pb.is_nan() { f64::INFINITY } else { pb };
        ka.total_cmp(&kb).then(a.index.cmp(&b.index))
    });
    Ok(SearchReport {
        closed_loop_poles: eig.values.iter().map(|z| [z.re, z.im]).collect(),
        forced_s: forced,
        n_choices: choices.len(),
        ranked,
        rejected,
    })
}

/// Largest off-block-diagonal entry of `m` relative to its spectral norm.
///
/// `row_blocks` and `col_blocks` give block sizes; both lists must have the
/// same length.
pub fn check_decoupling(m: &Mat, row_blocks: &[usize], col_blocks: &[usize]) -> Result<f64> {
    if row_blocks.len() != col_blocks.len() {
        return Err(Error::Input(
            "row and column block lists differ in length".into(),
        ));
    }
    if row_blocks.iter().sum::<usize>() != m.nrows()
        || col_blocks.iter().sum::<usize>() != m.ncols()
    {
        return Err(Error::Input("block sizes do not cover the matrix".into()));
    }
    if row_blocks.len() <= 1 || m.is_empty() {
        return Ok(0.0);
    }
    let norm = m.clone().singular_values().max();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let owner = |sizes: &[usize], i: usize| {
        let mut acc = 0;
        for (b, &s) in sizes.iter().enumerate() {
            acc += s;
            if i < acc {
                return b;
            }
        }
        sizes.len()
    };
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if owner(row_blocks, i) != owner(col_blocks, j) {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    Ok(worst / norm)
}

/// Spectral radius of the observer error dynamics.
pub fn observer_spectral_radius(r: &ObserverRealisation, plant: &DtStateSpace) -> Result<f64> {
    spectral_radius(&observer_matrix(r, plant))
}
