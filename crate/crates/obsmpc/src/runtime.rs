//! Online controller: observer updates, reference prefilters, the MPC step and
//! the multi-rate event schedule used for filter-form implementations.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::lti::DtStateSpace;
use crate::mpc::{CondensedQp, Interval};
use crate::numerics::{cond, inverse, vcat, Mat, Vector};
use crate::qp::{DualActiveSet, QpStatus};
use crate::realisation::{DesignPair, Form, ObserverRealisation};

/// Observer memory. `x_hat` is always the a-priori estimate x̂(k|k−1).
#[derive(Clone, Debug)]
pub struct ObserverState {
    pub form: Form,
    pub x_hat: Vector,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    /// Known-input map (−B·D for loop-shifted designs).
    pub e: Mat,
    pub kf: Mat,
    pub kc: Mat,
}

impl ObserverState {
    pub fn new(r: &ObserverRealisation, pair: &DesignPair) -> Self {
        let g = &pair.plant;
        Self {
            form: r.form,
            x_hat: Vector::zeros(g.n()),
            a: g.a.clone(),
            b: g.b.clone(),
            c: g.c.clone(),
            e: -(&g.b * &pair.outer_feedthrough),
            kf: r.kf.clone(),
            kc: r.kc.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.x_hat.len()
    }
}

/// Measurement update x̂(k|k) = (I − K_fC)x̂(k|k−1) + K_f y(k).
pub fn filter_observer_step(s: &ObserverState, y: &Vector) -> Result<Vector> {
    if s.form != Form::Filter {
        return Err(Error::Precondition(
            "filter step on a predictor-form observer".into(),
        ));
    }
    Ok(&s.x_hat + &s.kf * (y - &s.c * &s.x_hat))
}

/// Time update after the control is chosen: x̂(k+1|k) = A·x̂(k|k) + B·u(k) + E·w(k).
pub fn filter_time_update(s: &mut ObserverState, x_filtered: &Vector, u: &Vector, w: &Vector) {
    s.x_hat = &s.a * x_filtered + &s.b * u + &s.e * w;
}

/// x̂(k+1|k) = (Ã − K_fC)x̂(k|k−1) + Bũ(k) + E·w(k) + K_f y(k).
pub fn predictor_observer_step(
    s: &mut ObserverState,
    u: &Vector,
    y: &Vector,
    w: &Vector,
) -> Result<Vector> {
    if s.form != Form::Predictor {
        return Err(Error::Precondition(
            "predictor step on a filter-form observer".into(),
        ));
    }
    let innov = y - &s.c * &s.x_hat;
    s.x_hat = &s.a * &s.x_hat + &s.b * u + &s.e * w + &s.kf * innov;
    Ok(s.x_hat.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PrefilterKind {
    /// Observer copy driven by r, ignoring any loop-shift feedthrough.
    Nominal,
    /// Observer copy driven by r with the known −B·D·r term.
    LoopShiftNominal,
    /// Loop-shift nominal dynamics with x_r chosen so that L1·x_r = L2·r and K_c·x_r = K_c·x_pre.
    Shaped {
        #[serde(with = "crate::numerics::rows")]
        l1: Mat,
        #[serde(with = "crate::numerics::rows")]
        l2: Mat,
    },
}

/// Reference prefilter r → x_r.
#[derive(Clone, Debug)]
pub struct Prefilter {
    pub kind: PrefilterKind,
    pub sys: DtStateSpace,
    pub state: Vector,
    /// Dynamics-only realisation r → x_pre (identity output), kept for checks.
    pub nominal: DtStateSpace,
}

pub fn build_prefilter(
    kind: PrefilterKind,
    r: &ObserverRealisation,
    pair: &DesignPair,
) -> Result<Prefilter> {
    let g = &pair.plant;
    let n = g.n();
    let ny = g.n_outputs();
    let eye = Mat::identity(n, n);
    let bd = &g.b * &pair.outer_feedthrough;
    let shift = !matches!(kind, PrefilterKind::Nominal);
    let nominal = match r.form {
        Form::Predictor => {
            let bin = if shift { &r.kf - &bd } else { r.kf.clone() };
            DtStateSpace::new(
                &g.a - &r.kf * &g.c,
                bin,
                eye.clone(),
                Mat::zeros(n, ny),
                g.ts,
            )?
        }
        Form::Filter => {
            // x_r(k|k) = (I − K_fC)x_r⁻ + K_f r, x_r⁻⁺ = A·x_r(k|k) − B·D·r.
            let m = &eye - &r.kf * &g.c;
            let bin = if shift {
                &g.a * &r.kf - &bd
            } else {
                &g.a * &r.kf
            };
            DtStateSpace::new(&g.a * &m, bin, m, r.kf.clone(), g.ts)?
        }
    };
    let sys = match &kind {
        PrefilterKind::Shaped { l1, l2 } => {
            let nu = r.kc.nrows();
            if l1.shape() != (n - nu, n) || l2.shape() != (n - nu, ny) {
                return Err(dim(format!(
                    "shaped prefilter needs L1 {}×{n} and L2 {}×{ny}",
                    n - nu,
                    n - nu
                )));
            }
            let m = vcat(&[l1, &r.kc]);
            if cond(&m) > 1e10 {
                return Err(Error::Precondition("[L1; K_c] is singular".into()));
            }
            let minv = inverse(&m, "[L1; K_c]")?;
            let sel = vcat(&[&Mat::zeros(n - nu, n), &r.kc]);
            let sel_r = vcat(&[l2, &Mat::zeros(nu, ny)]);
            let out = &minv * &sel;
            DtStateSpace::new(
                nominal.a.clone(),
                nominal.b.clone(),
                &out * &nominal.c,
                &out * &nominal.d + &minv * &sel_r,
                g.ts,
            )?
        }
        _ => nominal.clone(),
    };
    Ok(Prefilter {
        kind,
        state: Vector::zeros(sys.n()),
        sys,
        nominal,
    })
}

impl Prefilter {
    pub fn output(&self, r: &Vector) -> Vector {
        &self.sys.c * &self.state + &self.sys.d * r
    }

    /// Unshaped reference x_pre(k) for the current state.
    pub fn raw_output(&self, r: &Vector) -> Vector {
        &self.nominal.c * &self.state + &self.nominal.d * r
    }

    pub fn update(&mut self, r: &Vector) {
        self.state = &self.sys.a * &self.state + &self.sys.b * r;
    }
}

/// Outcome of one control step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub status: QpStatus,
    pub objective: f64,
    pub n_active: usize,
    pub iterations: usize,
    /// First-step slack per softened signal.
    pub slacks: Vec<f64>,
    /// True when the QP failed and the saturated unconstrained law was used.
    pub fallback: bool,
    pub solve_time_s: f64,
}

/// Solves the QP for θ and returns (decision vector, diagnostics).
pub fn mpc_step(
    qp: &CondensedQp,
    theta: &Vector,
    solver: &DualActiveSet,
) -> Result<(Vector, StepDiagnostics)> {
    let (f, b) = qp.params(theta);
    let start = Instant::now();
    let sol = solver.solve(&qp.h, &f, &qp.a_ineq, &b)?;
    let solve_time_s = start.elapsed().as_secs_f64();
    let v = Vector::from_vec(sol.x_star.clone());
    let ns = qp.n_slacks_per_step;
    let slacks = qp.slacks(&v).rows(0, ns).iter().copied().collect();
    let objective = qp.objective(&v, theta);
    Ok((
        v,
        StepDiagnostics {
            status: sol.status,
            objective,
            n_active: sol.active_set.len(),
            iterations: sol.iterations,
            slacks,
            fallback: sol.status != QpStatus::Optimal,
            solve_time_s,
        },
    ))
}

/// Observer + prefilter + QP, stepped once per sample.
#[derive(Clone, Debug)]
pub struct MpcController {
    pub observer: ObserverState,
    pub qp: CondensedQp,
    pub prefilter: Option<Prefilter>,
    /// Physical feedthrough u = D(y − r) + ũ outside the observer.
    pub outer_feedthrough: Mat,
    pub u_bounds: Vec<Option<Interval>>,
    pub solver: DualActiveSet,
    /// Reuse the previous active set as the next solve's hint.
    pub warm_start: bool,
    /// Latest state reference, for traces.
    pub last_xr: Vector,
    /// Latest estimate used by the QP.
    pub last_estimate: Vector,
    /// Reference of the previous sample: a predictor-form QP is formed one
    /// period ahead, before r(k) is known.
    pub r_prev: Vector,
}

impl MpcController {
    pub fn new(
        r: &ObserverRealisation,
        pair: &DesignPair,
        qp: CondensedQp,
        prefilter: Option<Prefilter>,
        u_bounds: Vec<Option<Interval>>,
    ) -> Result<Self> {
        let observer = ObserverState::new(r, pair);
        let n = observer.n();
        if qp.n_states != n || qp.n_known != pair.plant.n_outputs() {
            return Err(dim("QP was condensed for a different model"));
        }
        Ok(Self {
            observer,
            qp,
            prefilter,
            outer_feedthrough: pair.outer_feedthrough.clone(),
            u_bounds,
            solver: DualActiveSet::new(),
            warm_start: true,
            last_xr: Vector::zeros(n),
            last_estimate: Vector::zeros(n),
            r_prev: Vector::zeros(pair.plant.n_outputs()),
        })
    }

    fn saturate(&self, u: &mut Vector) {
        for (i, b) in self.u_bounds.iter().enumerate() {
            if let Some(iv) = b {
                u[i] = u[i].clamp(iv.lo, iv.hi);
            }
        }
    }

    /// Computes the physical input for measurement y(k) and reference r(k),
    /// then advances the observer and prefilter.
    pub fn step(&mut self, y: &Vector, r: &Vector) -> Result<(Vector, StepDiagnostics)> {
        let x_est = match self.observer.form {
            Form::Filter => filter_observer_step(&self.observer, y)?,
            Form::Predictor => self.observer.x_hat.clone(),
        };
        let r_known = match self.observer.form {
            Form::Filter => r.clone(),
            Form::Predictor => self.r_prev.clone(),
        };
        let xr = match &self.prefilter {
            Some(p) => p.output(&r_known),
            None => Vector::zeros(self.observer.n()),
        };
        let theta = self.qp.theta(&x_est, &r_known, &xr)?;
        let (v, mut diag) = mpc_step(&self.qp, &theta, &self.solver)?;
        let outer = &self.outer_feedthrough * (y - r);
        let u_tilde = if diag.fallback {
            let mut u = &outer + &self.observer.kc * (&x_est - &xr);
            self.saturate(&mut u);
            u - &outer
        } else {
            self.qp.first_decision_input(&v, &theta)
        };
        if self.warm_start && !diag.fallback {
            let (_, b) = self.qp.params(&theta);
            self.solver.hint = (0..b.len())
                .filter(|&i| {
                    (self.qp.a_ineq.row(i).dot(&v.transpose()) - b[i]).abs()
                        <= 1e-9 * (1.0 + b[i].abs())
                })
                .collect();
        }
        // The QP bounds the input through the estimate; with outer feedthrough the
        // measured y can still push it out, so the actuator limit is applied here.
        let mut u = &outer + &u_tilde;
        self.saturate(&mut u);
        let u_tilde = &u - &outer;
        match self.observer.form {
            Form::Filter => filter_time_update(&mut self.observer, &x_est, &u_tilde, r),
            Form::Predictor => {
                predictor_observer_step(&mut self.observer, &u_tilde, y, r)?;
            }
        }
        if let Some(p) = &mut self.prefilter {
            p.update(r);
        }
        if diag.fallback {
            diag.slacks.iter_mut().for_each(|s| *s = 0.0);
        }
        self.last_xr = xr;
        self.last_estimate = x_est;
        self.r_prev = r.clone();
        Ok((u, diag))
    }
}

/// Events of one multi-rate sampling period, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "event")]
pub enum ScheduleEvent {
    SampleOutput { t: f64 },
    MeasurementUpdate { t: f64 },
    StartQp { t: f64 },
    ApplyInput { t: f64 },
    TimeUpdate { t: f64 },
    Wait { until: f64 },
}

impl ScheduleEvent {
    pub fn time(&self) -> f64 {
        match *self {
            Self::SampleOutput { t }
            | Self::MeasurementUpdate { t }
            | Self::StartQp { t }
            | Self::ApplyInput { t }
            | Self::TimeUpdate { t } => t,
            Self::Wait { until } => until,
        }
    }
}

/// Event plan for period k with the control output delayed by Ts/N_div.
pub fn multirate_schedule(k: usize, ts: f64, n_div: usize) -> Result<Vec<ScheduleEvent>> {
    if n_div < 2 {
        return Err(Error::Input("N_div must be at least 2".into()));
    }
    if !(ts > 0.0) {
        return Err(Error::Input("sample period must be positive".into()));
    }
    let t0 = k as f64 * ts;
    let t1 = t0 + ts / n_div as f64;
    Ok(vec![
        ScheduleEvent::SampleOutput { t: t0 },
        ScheduleEvent::MeasurementUpdate { t: t0 },
        ScheduleEvent::StartQp { t: t0 },
        ScheduleEvent::ApplyInput { t: t1 },
        ScheduleEvent::TimeUpdate { t: t1 },
        ScheduleEvent::Wait { until: t0 + ts },
    ])
}

/// Lag between sampling and applying the input implied by a schedule.
pub fn schedule_lag(events: &[ScheduleEvent]) -> Option<f64> {
    let t0 = events
        .iter()
        .find_map(|e| matches!(e, ScheduleEvent::SampleOutput { .. }).then(|| e.time()))?;
    let t1 = events
        .iter()
        .find_map(|e| matches!(e, ScheduleEvent::ApplyInput { .. }).then(|| e.time()))?;
    Some(t1 - t0)
}
