//! Inverse-optimal MPC: zero-value stage costs around K_c, prestabilisation,
//! and condensation into a dense QP parametric in θ = [x̂₀; w; x_r].
//!
//! w is a known exogenous signal held constant over the horizon (for example
//! the reference that loop-shifted feedthrough acts on); x_r is the state
//! reference, also held constant.

use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::numerics::{cond, hcat, rows, Mat, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// ‖u − K_c x‖²_R
    Matching,
    /// ‖u − K_c x‖²_{R1} + ‖B(u − K_c x)‖²_{Q1}
    Effect,
}

/// Stage cost ℓ(x, u) = (u − K_c x)ᵀ W (u − K_c x).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageCost {
    pub kind: CostKind,
    #[serde(with = "rows")]
    pub w: Mat,
    #[serde(with = "rows")]
    pub kc: Mat,
}

fn is_psd(m: &Mat, strict: bool) -> bool {
    if m.nrows() != m.ncols() || (m - m.transpose()).norm() > 1e-10 * m.norm().max(1.0) {
        return false;
    }
    let ev = m.clone().symmetric_eigenvalues();
    let tol = 1e-12 * m.norm().max(1.0);
    if strict {
        ev.iter().all(|&e| e > tol)
    } else {
        ev.iter().all(|&e| e >= -tol)
    }
}

/// Matching cost with weight R ≻ 0.
pub fn matching_cost(kc: &Mat, r: &Mat) -> Result<StageCost> {
    if r.shape() != (kc.nrows(), kc.nrows()) {
        return Err(dim("R must be n_u × n_u"));
    }
    if !is_psd(r, true) {
        return Err(Error::Input("R must be symmetric positive definite".into()));
    }
    Ok(StageCost {
        kind: CostKind::Matching,
        w: r.clone(),
        kc: kc.clone(),
    })
}

/// Effect cost with W = R1 + BᵀQ1B.
pub fn effect_cost(kc: &Mat, b: &Mat, q1: &Mat, r1: &Mat) -> Result<StageCost> {
    let (nu, n) = kc.shape();
    if b.shape() != (n, nu) || q1.shape() != (n, n) || r1.shape() != (nu, nu) {
        return Err(dim("effect cost needs B n×n_u, Q1 n×n, R1 n_u×n_u"));
    }
    if !is_psd(q1, false) {
        return Err(Error::Input(
            "Q1 must be symmetric positive semidefinite".into(),
        ));
    }
    if !is_psd(r1, true) {
        return Err(Error::Input(
            "R1 must be symmetric positive definite".into(),
        ));
    }
    let w = r1 + b.transpose() * q1 * b;
    Ok(StageCost {
        kind: CostKind::Effect,
        w: (&w + w.transpose()) * 0.5,
        kc: kc.clone(),
    })
}

impl StageCost {
    /// Joint weight on [x; u]: [[K_cᵀWK_c, −K_cᵀW], [−WK_c, W]].
    pub fn joint_weight(&self) -> Mat {
        let kw = self.kc.transpose() * &self.w;
        crate::numerics::block2(
            &(&kw * &self.kc),
            &(-&kw),
            &(-(&self.w * &self.kc)),
            &self.w,
        )
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> f64 {
        let e = u - &self.kc * x;
        e.dot(&(&self.w * &e))
    }

    /// Cost along u = K_c(x − x_r) + η in η coordinates: ηᵀWη.
    pub fn prestabilised_weight(&self) -> Mat {
        self.w.clone()
    }
}

/// Residual of AᵀP(A + BK_c) − P at P = 0, which is identically zero.
pub fn check_zero_dare(a: &Mat, b: &Mat, kc: &Mat) -> f64 {
    let n = a.nrows();
    let p = Mat::zeros(n, n);
    (a.transpose() * &p * (a + b * kc) - &p).norm()
}

/// Bound on one scalar signal; either side may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn symmetric(v: f64) -> Self {
        Self { lo: -v, hi: v }
    }

    pub fn free() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn is_free(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    fn validate(&self) -> Result<()> {
        if self.lo.is_nan() || self.hi.is_nan() || self.lo > self.hi {
            return Err(Error::Input(format!(
                "empty interval [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Horizon, cost and constraint sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub cost: StageCost,
    /// Hard bounds per physical input (`None` = unconstrained channel).
    #[serde(default)]
    pub u_bounds: Vec<Option<Interval>>,
    /// Softened bounds per plant output.
    #[serde(default)]
    pub y_bounds: Vec<Option<Interval>>,
    /// Softened bounds per state.
    #[serde(default)]
    pub x_bounds: Vec<Option<Interval>>,
    #[serde(default = "default_soft")]
    pub soft_output_weight: f64,
    /// Whether the cost is taken around a state reference x_r.
    #[serde(default)]
    pub tracking: bool,
}

pub fn default_soft() -> f64 {
    1e5
}

impl MpcConfig {
    pub fn unconstrained(horizon: usize, cost: StageCost) -> Self {
        Self {
            horizon,
            cost,
            u_bounds: Vec::new(),
            y_bounds: Vec::new(),
            x_bounds: Vec::new(),
            soft_output_weight: default_soft(),
            tracking: false,
        }
    }
}

/// Prediction model x⁺ = Ax + Bu + E·w, y = Cx; the physical input is
/// u_phys = u + F_x·x + F_w·w (non-zero after loop shifting).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpcModel {
    #[serde(with = "rows")]
    pub a: Mat,
    #[serde(with = "rows")]
    pub b: Mat,
    #[serde(with = "rows")]
    pub c: Mat,
    #[serde(with = "rows")]
    pub e: Mat,
    #[serde(with = "rows")]
    pub input_fx: Mat,
    #[serde(with = "rows")]
    pub input_fw: Mat,
}

impl MpcModel {
    /// Plain model without known inputs or feedthrough.
    pub fn plain(a: Mat, b: Mat, c: Mat) -> Self {
        let (n, nu) = (a.nrows(), b.ncols());
        Self {
            a,
            b,
            c,
            e: Mat::zeros(n, 0),
            input_fx: Mat::zeros(nu, n),
            input_fw: Mat::zeros(nu, 0),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn nw(&self) -> usize {
        self.e.ncols()
    }

    fn validate(&self) -> Result<()> {
        let (n, nu, nw) = (self.n(), self.nu(), self.nw());
        if self.a.ncols() != n || self.b.nrows() != n || self.c.ncols() != n || self.e.nrows() != n
        {
            return Err(dim("MPC model matrices are inconsistent"));
        }
        if self.input_fx.shape() != (nu, n) || self.input_fw.shape() != (nu, nw) {
            return Err(dim("MPC input feedthrough maps are inconsistent"));
        }
        Ok(())
    }
}

/// Which decision variable the QP is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Inputs directly, cost with state/input cross terms.
    CrossTerm,
    /// η = u − K_c(x − x_r) on the prestabilised model A + BK_c.
    Prestabilised,
}

/// Dense QP: minimise ½vᵀHv + f(θ)ᵀv s.t. A·v ≤ b(θ), with
/// f = F·θ, b = b₀ + B_θ·θ and θ = [x̂₀; w; x_r].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CondensedQp {
    pub formulation: Formulation,
    pub horizon: usize,
    pub n_inputs: usize,
    pub n_slacks_per_step: usize,
    pub n_states: usize,
    pub n_known: usize,
    #[serde(with = "rows")]
    pub h: Mat,
    #[serde(with = "rows")]
    pub f_theta: Mat,
    #[serde(with = "rows")]
    pub a_ineq: Mat,
    pub b0: Vec<f64>,
    #[serde(with = "rows")]
    pub b_theta: Mat,
    /// Constant cost θᵀ·C·θ so that the full objective is reported exactly.
    #[serde(with = "rows")]
    pub c_theta: Mat,
    /// Input sequence U = U_v·v + U_θ·θ.
    #[serde(with = "rows")]
    pub u_map_v: Mat,
    #[serde(with = "rows")]
    pub u_map_theta: Mat,
    /// First decision-model input ũ₀ = v₀ + G·θ (G = 0 for the cross-term form).
    #[serde(with = "rows")]
    pub u0_decision_theta: Mat,
    pub regularised: bool,
}

impl CondensedQp {
    pub fn n_decision(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.a_ineq.nrows()
    }

    pub fn n_theta(&self) -> usize {
        2 * self.n_states + self.n_known
    }

    /// Stacks θ = [x̂₀; w; x_r].
    pub fn theta(&self, x0: &Vector, w: &Vector, xr: &Vector) -> Result<Vector> {
        if x0.len() != self.n_states || w.len() != self.n_known || xr.len() != self.n_states {
            return Err(dim("theta: wrong parameter lengths"));
        }
        let mut t = Vector::zeros(self.n_theta());
        t.rows_mut(0, self.n_states).copy_from(x0);
        t.rows_mut(self.n_states, self.n_known).copy_from(w);
        t.rows_mut(self.n_states + self.n_known, self.n_states)
            .copy_from(xr);
        Ok(t)
    }

    /// Linear term and right-hand side for a parameter value.
    pub fn params(&self, theta: &Vector) -> (Vector, Vector) {
        let f = &self.f_theta * theta;
        let b = Vector::from_column_slice(&self.b0) + &self.b_theta * theta;
        (f, b)
    }

    /// Full objective including the θ-only constant.
    pub fn objective(&self, v: &Vector, theta: &Vector) -> f64 {
        let f = &self.f_theta * theta;
        0.5 * v.dot(&(&self.h * v)) + f.dot(v) + theta.dot(&(&self.c_theta * theta))
    }

    /// Physical input sequence (stacked) for a decision vector.
    pub fn inputs(&self, v: &Vector, theta: &Vector) -> Vector {
        &self.u_map_v * v.rows(0, self.u_map_v.ncols()) + &self.u_map_theta * theta
    }

    /// First physical input.
    pub fn first_input(&self, v: &Vector, theta: &Vector) -> Vector {
        self.inputs(v, theta).rows(0, self.n_inputs).into_owned()
    }

    /// First input of the prediction model, before any physical feedthrough.
    pub fn first_decision_input(&self, v: &Vector, theta: &Vector) -> Vector {
        v.rows(0, self.n_inputs).into_owned() + &self.u0_decision_theta * theta
    }

    /// Slack values per step (stacked).
    pub fn slacks<'a>(&self, v: &'a Vector) -> nalgebra::DVectorView<'a, f64> {
        let nv = self.horizon * self.n_inputs;
        v.rows(nv, v.len() - nv)
    }
}

/// Condenses the N-step problem for the given model and configuration.
pub fn condense(
    model: &MpcModel,
    cfg: &MpcConfig,
    formulation: Formulation,
) -> Result<CondensedQp> {
    model.validate()?;
    let (n, nu, nw, ny) = (model.n(), model.nu(), model.nw(), model.c.nrows());
    let big_n = cfg.horizon;
    if big_n == 0 {
        return Err(Error::Input("horizon must be at least 1".into()));
    }
    let kc = &cfg.cost.kc;
    if kc.shape() != (nu, n) || cfg.cost.w.shape() != (nu, nu) {
        return Err(dim("cost K_c / W do not match the model"));
    }
    for iv in cfg
        .u_bounds
        .iter()
        .chain(&cfg.y_bounds)
        .chain(&cfg.x_bounds)
        .flatten()
    {
        iv.validate()?;
    }
    if cfg.u_bounds.len() > nu || cfg.y_bounds.len() > ny || cfg.x_bounds.len() > n {
        return Err(dim("more bounds than signals"));
    }
    let soft_signals: Vec<(Mat, Interval)> = cfg
        .y_bounds
        .iter()
        .enumerate()
        .filter_map(|(i, b)| {
            b.filter(|iv| !iv.is_free())
                .map(|iv| (model.c.rows(i, 1).into_owned(), iv))
        })
        .chain(cfg.x_bounds.iter().enumerate().filter_map(|(i, b)| {
            b.filter(|iv| !iv.is_free()).map(|iv| {
                let mut r = Mat::zeros(1, n);
                r[(0, i)] = 1.0;
                (r, iv)
            })
        }))
        .collect();
    if !soft_signals.is_empty() && !(cfg.soft_output_weight > 0.0) {
        return Err(Error::Input(
            "soft constraint weight must be positive".into(),
        ));
    }
    let ns = soft_signals.len();
    let nth = 2 * n + nw;
    // θ selectors
    let sel_x0 = hcat(&[&Mat::identity(n, n), &Mat::zeros(n, nw + n)]);
    let sel_w = hcat(&[
        &Mat::zeros(nw, n),
        &Mat::identity(nw, nw),
        &Mat::zeros(nw, n),
    ]);
    let sel_xr = hcat(&[&Mat::zeros(n, n + nw), &Mat::identity(n, n)]);
    let xr_term = if cfg.tracking {
        kc * &sel_xr
    } else {
        Mat::zeros(nu, nth)
    };

    // Per-step dynamics x⁺ = Ad x + B v + Dθ θ, physical input u = Ux x + v + Uθ θ,
    // cost residual e = Ex x + v + Eθ θ.
    let u0_decision_theta = match formulation {
        Formulation::CrossTerm => Mat::zeros(nu, nth),
        Formulation::Prestabilised => kc * &sel_x0 - &xr_term,
    };
    let (ad, d_theta, ux, u_theta, ex, e_theta) = match formulation {
        Formulation::CrossTerm => (
            model.a.clone(),
            &model.e * &sel_w,
            model.input_fx.clone(),
            &model.input_fw * &sel_w,
            -kc,
            xr_term.clone(),
        ),
        Formulation::Prestabilised => (
            &model.a + &model.b * kc,
            &model.e * &sel_w - &model.b * &xr_term,
            kc + &model.input_fx,
            &model.input_fw * &sel_w - &xr_term,
            Mat::zeros(nu, n),
            Mat::zeros(nu, nth),
        ),
    };

    // Lifted states X_k = Φ_k θ + Γ_k V for k = 0..N.
    let nv = big_n * nu;
    let mut phi: Vec<Mat> = Vec::with_capacity(big_n + 1);
    let mut gam: Vec<Mat> = Vec::with_capacity(big_n + 1);
    phi.push(sel_x0.clone());
    gam.push(Mat::zeros(n, nv));
    for k in 0..big_n {
        let p = &ad * &phi[k] + &d_theta;
        let mut g = &ad * &gam[k];
        let mut blk = g.view_mut((0, k * nu), (n, nu));
        blk += &model.b;
        phi.push(p);
        gam.push(g);
    }

    // Cost residual stack E = M V + Cθ θ.
    let mut m_v = Mat::zeros(nv, nv);
    let mut c_t = Mat::zeros(nv, nth);
    for k in 0..big_n {
        let mut rows_v = &ex * &gam[k];
        let mut blk = rows_v.view_mut((0, k * nu), (nu, nu));
        blk += Mat::identity(nu, nu);
        m_v.view_mut((k * nu, 0), (nu, nv)).copy_from(&rows_v);
        c_t.view_mut((k * nu, 0), (nu, nth))
            .copy_from(&(&ex * &phi[k] + &e_theta));
    }
    let mut wbig = Mat::zeros(nv, nv);
    for k in 0..big_n {
        wbig.view_mut((k * nu, k * nu), (nu, nu))
            .copy_from(&cfg.cost.w);
    }
    let d = nv + big_n * ns;
    let mut h = Mat::zeros(d, d);
    let hv = m_v.transpose() * &wbig * &m_v * 2.0;
    h.view_mut((0, 0), (nv, nv))
        .copy_from(&((&hv + hv.transpose()) * 0.5));
    for i in nv..d {
        h[(i, i)] = 2.0 * cfg.soft_output_weight;
    }
    let mut f_theta = Mat::zeros(d, nth);
    f_theta
        .view_mut((0, 0), (nv, nth))
        .copy_from(&(m_v.transpose() * &wbig * &c_t * 2.0));
    let c_theta = c_t.transpose() * &wbig * &c_t;

    // Physical input stack U = U_v V + U_θ θ.
    let mut u_map_v = Mat::zeros(nv, nv);
    let mut u_map_theta = Mat::zeros(nv, nth);
    for k in 0..big_n {
        let mut r = &ux * &gam[k];
        let mut blk = r.view_mut((0, k * nu), (nu, nu));
        blk += Mat::identity(nu, nu);
        u_map_v.view_mut((k * nu, 0), (nu, nv)).copy_from(&r);
        u_map_theta
            .view_mut((k * nu, 0), (nu, nth))
            .copy_from(&(&ux * &phi[k] + &u_theta));
    }

    // Inequalities.
    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut b0: Vec<f64> = Vec::new();
    let mut bt_rows: Vec<Vec<f64>> = Vec::new();
    let mut push = |row: Mat, rhs: f64, bt: Vec<f64>| {
        a_rows.push(row.iter().copied().collect());
        b0.push(rhs);
        bt_rows.push(bt);
    };
    for k in 0..big_n {
        for (i, b) in cfg.u_bounds.iter().enumerate() {
            let Some(iv) = b else { continue };
            let mut row = Mat::zeros(1, d);
            row.view_mut((0, 0), (1, nv))
                .copy_from(&u_map_v.row(k * nu + i));
            let th: Vec<f64> = u_map_theta.row(k * nu + i).iter().copied().collect();
            if iv.hi.is_finite() {
                push(row.clone(), iv.hi, th.iter().map(|v| -v).collect());
            }
            if iv.lo.is_finite() {
                push(-&row, -iv.lo, th.clone());
            }
        }
        for (j, (sig, iv)) in soft_signals.iter().enumerate() {
            let zk = sig * &gam[k + 1];
            let zt: Vec<f64> = (sig * &phi[k + 1]).iter().copied().collect();
            let mut row = Mat::zeros(1, d);
            row.view_mut((0, 0), (1, nv)).copy_from(&zk);
            row[(0, nv + k * ns + j)] = -1.0;
            if iv.hi.is_finite() {
                push(row.clone(), iv.hi, zt.iter().map(|v| -v).collect());
            }
            if iv.lo.is_finite() {
                let mut neg = -&row;
                neg[(0, nv + k * ns + j)] = -1.0;
                push(neg, -iv.lo, zt.clone());
            }
        }
    }
    let m = a_rows.len();
    let mut a_ineq = Mat::zeros(m, d);
    let mut b_theta = Mat::zeros(m, nth);
    for i in 0..m {
        for j in 0..d {
            a_ineq[(i, j)] = a_rows[i][j];
        }
        for j in 0..nth {
            b_theta[(i, j)] = bt_rows[i][j];
        }
    }

    let mut regularised = false;
    if cond(&h) > 1e12 {
        for i in 0..d {
            h[(i, i)] += 1e-9;
        }
        regularised = true;
    }
    Ok(CondensedQp {
        formulation,
        horizon: big_n,
        n_inputs: nu,
        n_slacks_per_step: ns,
        n_states: n,
        n_known: nw,
        h,
        f_theta,
        a_ineq,
        b0,
        b_theta,
        c_theta,
        u_map_v,
        u_map_theta,
        u0_decision_theta,
        regularised,
    })
}

/// Prestabilised model (A + BK_c, B) with the cost ηᵀWη, as a convenience view.
pub fn prestabilise(a: &Mat, b: &Mat, cost: &StageCost) -> (Mat, Mat, Mat) {
    (a + b * &cost.kc, b.clone(), cost.prestabilised_weight())
}

/// Tracking cost around a state reference: returns the configuration with tracking on.
pub fn build_tracking_cost(cfg: &MpcConfig) -> MpcConfig {
    let mut c = cfg.clone();
    c.tracking = true;
    c
}

/// Prediction model for a prepared design pair. The known signal w is the
/// output reference r; loop-shifted feedthrough u = D(y − r) + ũ enters as
/// E = −B·D on the state and as D·C·x − D·r on the physical input.
pub fn design_model(pair: &crate::realisation::DesignPair) -> MpcModel {
    let g = &pair.plant;
    let d = &pair.outer_feedthrough;
    MpcModel {
        a: g.a.clone(),
        b: g.b.clone(),
        c: g.c.clone(),
        e: -(&g.b * d),
        input_fx: d * &g.c,
        input_fw: -d,
    }
}
