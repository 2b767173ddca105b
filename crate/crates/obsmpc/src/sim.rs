//! Closed-loop experiments: plants, references, disturbances, sensor noise,
//! actuator faults and trace capture.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{c2d_zoh, CtStateSpace, DtStateSpace};
use crate::models::PendulumParams;
use crate::mpc::{condense, design_model, matching_cost, Formulation, Interval, MpcConfig};
use crate::numerics::{Mat, Vector};
use crate::qp::QpStatus;
use crate::realisation::{DesignPair, ObserverRealisation};
use crate::runtime::{MpcController, StepDiagnostics};

/// Plant used for simulation.
#[derive(Clone, Debug)]
pub enum PlantModel {
    LinearDiscrete(DtStateSpace),
    /// Integrated exactly by zero-order-hold sub-steps.
    LinearContinuous(CtStateSpace),
    PendulumNonlinear(PendulumParams),
}

impl PlantModel {
    pub fn n_states(&self) -> usize {
        match self {
            Self::LinearDiscrete(g) => g.n(),
            Self::LinearContinuous(g) => g.n(),
            Self::PendulumNonlinear(_) => 4,
        }
    }

    pub fn n_inputs(&self) -> usize {
        match self {
            Self::LinearDiscrete(g) => g.n_inputs(),
            Self::LinearContinuous(g) => g.b.ncols(),
            Self::PendulumNonlinear(_) => 1,
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            Self::LinearDiscrete(g) => g.n_outputs(),
            Self::LinearContinuous(g) => g.c.nrows(),
            Self::PendulumNonlinear(_) => 2,
        }
    }

    fn output(&self, x: &Vector) -> Vector {
        match self {
            Self::LinearDiscrete(g) => &g.c * x,
            Self::LinearContinuous(g) => &g.c * x,
            Self::PendulumNonlinear(_) => Vector::from_vec(vec![x[0], x[2]]),
        }
    }
}

/// ẍ = (mlθ̇²sinθ − mg·sinθcosθ + u)/(M + m·sin²θ), θ̈ = (g·sinθ − ẍcosθ)/l.
pub fn pendulum_dynamics(p: &PendulumParams, x: &Vector, force: f64) -> Vector {
    let (mc, m, l, g) = (p.cart_mass, p.bob_mass, p.length, p.gravity);
    let (s, c) = x[2].sin_cos();
    let xdd = (m * l * x[3] * x[3] * s - m * g * s * c + force) / (mc + m * s * s);
    let tdd = (g * s - xdd * c) / l;
    Vector::from_vec(vec![x[1], xdd, x[3], tdd])
}

/// Total mechanical energy of the cart-pendulum (zero potential at the pivot).
pub fn pendulum_energy(p: &PendulumParams, x: &Vector) -> f64 {
    let (mc, m, l, g) = (p.cart_mass, p.bob_mass, p.length, p.gravity);
    let c = x[2].cos();
    0.5 * (mc + m) * x[1] * x[1]
        + m * l * x[1] * x[3] * c
        + 0.5 * m * l * l * x[3] * x[3]
        + m * g * l * c
}

/// Classical RK4 with a constant force over `dt`, split into `n_sub` steps.
pub fn rk4_pendulum(p: &PendulumParams, x: &Vector, force: f64, dt: f64, n_sub: usize) -> Vector {
    let h = dt / n_sub as f64;
    let mut x = x.clone();
    for _ in 0..n_sub {
        let k1 = pendulum_dynamics(p, &x, force);
        let k2 = pendulum_dynamics(p, &(&x + &k1 * (h / 2.0)), force);
        let k3 = pendulum_dynamics(p, &(&x + &k2 * (h / 2.0)), force);
        let k4 = pendulum_dynamics(p, &(&x + &k3 * h), force);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Piecewise-linear program through (t, value) points; constant outside the
/// points, a repeated time gives a jump.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProgram {
    pub points: Vec<(f64, f64)>,
}

impl ReferenceProgram {
    pub fn constant(v: f64) -> Self {
        Self {
            points: vec![(0.0, v)],
        }
    }

    pub fn step(at: f64, v: f64) -> Self {
        Self {
            points: vec![(at, 0.0), (at, v)],
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let p = &self.points;
        match p.len() {
            0 => 0.0,
            _ if t < p[0].0 => p[0].1,
            _ => {
                let i = p.iter().rposition(|&(ti, _)| ti <= t).unwrap_or(0);
                match p.get(i + 1) {
                    Some(&(t1, v1)) if t1 > p[i].0 => {
                        p[i].1 + (v1 - p[i].1) * (t - p[i].0) / (t1 - p[i].0)
                    }
                    _ => p[i].1,
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DisturbanceKind {
    /// One-off jump of a plant state.
    StateStep { state: usize, value: f64 },
    /// Additive offset on an applied input from the event time on.
    InputStep { input: usize, value: f64 },
    /// Additive offset on a measured output from the event time on.
    OutputStep { output: usize, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub time: f64,
    #[serde(flatten)]
    pub kind: DisturbanceKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation per output (empty = no noise).
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Actuator locked at `value` from `time` on; the controller is not told.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub time: f64,
    pub actuator: usize,
    #[serde(default)]
    pub value: f64,
}

/// Applies active faults to a commanded input.
pub fn inject_fault(t: f64, faults: &[Fault], u: &mut Vector) -> Result<()> {
    for f in faults {
        if f.actuator >= u.len() {
            return Err(Error::Config(format!(
                "fault on unknown actuator {}",
                f.actuator
            )));
        }
        if t >= f.time {
            u[f.actuator] = f.value;
        }
    }
    Ok(())
}

/// Controller in the loop.
#[derive(Clone, Debug)]
pub enum ControllerSpec {
    /// u = K₀(y − r) implemented without computation delay.
    Baseline(DtStateSpace),
    Mpc(Box<MpcController>),
}

/// Bounds reported in summaries (not enforced by the simulator).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MonitoredBounds {
    pub u: Vec<Option<Interval>>,
    pub y: Vec<Option<Interval>>,
    pub x: Vec<Option<Interval>>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantModel,
    pub x0: Vector,
    pub ts: f64,
    pub duration: f64,
    /// One program per output; missing outputs have zero reference.
    pub references: Vec<ReferenceProgram>,
    pub disturbances: Vec<Disturbance>,
    pub noise: NoiseSpec,
    pub faults: Vec<Fault>,
    pub controller: ControllerSpec,
    /// Control applied Ts/N_div after sampling (continuous plants only).
    pub control_lag_div: Option<usize>,
    pub bounds: MonitoredBounds,
}

impl Scenario {
    pub fn n_steps(&self) -> usize {
        if self.duration <= 0.0 {
            0
        } else {
            (self.duration / self.ts + 1e-9).floor() as usize
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, nu, ny) = (
            self.plant.n_states(),
            self.plant.n_inputs(),
            self.plant.n_outputs(),
        );
        if !(self.ts > 0.0) {
            return Err(Error::Config("sample period must be positive".into()));
        }
        if self.x0.len() != n {
            return Err(Error::Config(format!(
                "x0 has {} entries, plant has {n} states",
                self.x0.len()
            )));
        }
        if self.references.len() > ny {
            return Err(Error::Config("more reference programs than outputs".into()));
        }
        if self.noise.sigma.len() > ny || self.noise.sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config(
                "noise σ must be non-negative, one per output".into(),
            ));
        }
        for d in &self.disturbances {
            let ok = match d.kind {
                DisturbanceKind::StateStep { state, .. } => state < n,
                DisturbanceKind::InputStep { input, .. } => input < nu,
                DisturbanceKind::OutputStep { output, .. } => output < ny,
            };
            if !ok || d.time > self.duration {
                return Err(Error::Config(format!("disturbance {d:?} out of range")));
            }
        }
        for f in &self.faults {
            if f.actuator >= nu {
                return Err(Error::Config(format!(
                    "fault on unknown actuator {}",
                    f.actuator
                )));
            }
            if f.time > self.duration {
                return Err(Error::Config("fault time beyond scenario duration".into()));
            }
        }
        if let Some(nd) = self.control_lag_div {
            if nd < 2 {
                return Err(Error::Config("N_div must be at least 2".into()));
            }
            if matches!(self.plant, PlantModel::LinearDiscrete(_)) {
                return Err(Error::Config(
                    "a control lag needs a continuous plant".into(),
                ));
            }
        }
        let (ku, ky) = match &self.controller {
            ControllerSpec::Baseline(k) => (k.n_outputs(), k.n_inputs()),
            ControllerSpec::Mpc(c) => (c.qp.n_inputs, c.qp.n_known),
        };
        if ku != nu || ky != ny {
            return Err(Error::Config(format!(
                "controller is {ku}×{ky} (inputs×outputs) but the plant is {nu}×{ny}"
            )));
        }
        if let PlantModel::LinearDiscrete(g) = &self.plant {
            if !g.is_strictly_proper() {
                return Err(Error::Config(
                    "simulated discrete plant must be strictly proper".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub y: Vec<f64>,
    /// Input applied to the plant (after faults).
    pub u: Vec<f64>,
    /// Input commanded by the controller.
    pub u_cmd: Vec<f64>,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub x_r: Vec<f64>,
    pub qp: Option<StepDiagnostics>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: String,
    pub rows: Vec<TraceRow>,
    pub n_outputs: usize,
    pub n_inputs: usize,
    pub n_states: usize,
    pub n_estimates: usize,
    pub n_slacks: usize,
    pub diverged: bool,
}

struct Stepper {
    plant: PlantModel,
    ts: f64,
    /// (Φ, Γ) per sub-interval length, for continuous linear plants.
    zoh: Vec<(f64, Mat, Mat)>,
}

impl Stepper {
    fn new(plant: &PlantModel, ts: f64, lag: Option<usize>) -> Result<Self> {
        let mut zoh = Vec::new();
        if let PlantModel::LinearContinuous(g) = plant {
            let mut dts = vec![ts];
            if let Some(nd) = lag {
                dts.push(ts / nd as f64);
                dts.push(ts - ts / nd as f64);
            }
            for dt in dts {
                let d = c2d_zoh(g, dt)?;
                zoh.push((dt, d.a, d.b));
            }
        }
        Ok(Self {
            plant: plant.clone(),
            ts,
            zoh,
        })
    }

    fn advance(&self, x: &Vector, u: &Vector, dt: f64) -> Vector {
        match &self.plant {
            PlantModel::LinearDiscrete(g) => &g.a * x + &g.b * u,
            PlantModel::LinearContinuous(_) => {
                let (_, phi, gam) = self
                    .zoh
                    .iter()
                    .find(|(d, _, _)| (d - dt).abs() <= 1e-12 * self.ts)
                    .expect("sub-interval discretisations are precomputed");
                phi * x + gam * u
            }
            PlantModel::PendulumNonlinear(p) => {
                let n_sub = ((20.0 * dt / self.ts).round() as usize).max(1);
                rk4_pendulum(p, x, u[0], dt, n_sub)
            }
        }
    }
}

/// Runs a scenario. Deterministic given the scenario (including its seed).
pub fn simulate(scenario: &Scenario) -> Result<Trace> {
    scenario.validate()?;
    let mut controller = scenario.controller.clone();
    let plant = &scenario.plant;
    let (n, nu, ny) = (plant.n_states(), plant.n_inputs(), plant.n_outputs());
    let ts = scenario.ts;
    let stepper = Stepper::new(plant, ts, scenario.control_lag_div)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.noise.seed);
    let noise: Vec<Option<Normal<f64>>> = (0..ny)
        .map(|i| {
            let s = scenario.noise.sigma.get(i).copied().unwrap_or(0.0);
            (s > 0.0).then(|| Normal::new(0.0, s).expect("σ validated"))
        })
        .collect();
    let (n_est, n_slacks) = match &controller {
        ControllerSpec::Baseline(_) => (0, 0),
        ControllerSpec::Mpc(c) => (c.qp.n_states, c.qp.n_slacks_per_step),
    };
    let mut k_state = match &controller {
        ControllerSpec::Baseline(k) => Vector::zeros(k.n()),
        ControllerSpec::Mpc(_) => Vector::zeros(0),
    };
    let mut trace = Trace {
        scenario: scenario.name.clone(),
        rows: Vec::new(),
        n_outputs: ny,
        n_inputs: nu,
        n_states: n,
        n_estimates: n_est,
        n_slacks,
        diverged: false,
    };
    let mut x = scenario.x0.clone();
    let mut u_prev = Vector::zeros(nu);
    let mut applied = vec![false; scenario.disturbances.len()];
    let mut input_offset = Vector::zeros(nu);
    let mut output_offset = Vector::zeros(ny);

    for k in 0..scenario.n_steps() {
        let t = k as f64 * ts;
        for (i, d) in scenario.disturbances.iter().enumerate() {
            if !applied[i] && d.time <= t + 1e-9 * ts {
                applied[i] = true;
                match d.kind {
                    DisturbanceKind::StateStep { state, value } => x[state] += value,
                    DisturbanceKind::InputStep { input, value } => input_offset[input] += value,
                    DisturbanceKind::OutputStep { output, value } => output_offset[output] += value,
                }
            }
        }
        let mut y = plant.output(&x) + &output_offset;
        for (i, nz) in noise.iter().enumerate() {
            if let Some(dist) = nz {
                y[i] += dist.sample(&mut rng);
            }
        }
        let r = Vector::from_fn(ny, |i, _| {
            scenario.references.get(i).map_or(0.0, |p| p.value(t))
        });

        let (u_cmd, x_hat, x_r, diag) = match &mut controller {
            ControllerSpec::Baseline(kk) => {
                let e = &y - &r;
                let u = &kk.c * &k_state + &kk.d * &e;
                k_state = &kk.a * &k_state + &kk.b * &e;
                (u, Vec::new(), Vec::new(), None)
            }
            ControllerSpec::Mpc(c) => {
                let (u, d) = c.step(&y, &r)?;
                let xh = c.last_estimate.iter().copied().collect();
                let xr = c.last_xr.iter().copied().collect();
                (u, xh, xr, Some(d))
            }
        };
        let mut u = u_cmd.clone();
        inject_fault(t, &scenario.faults, &mut u)?;
        u += &input_offset;

        trace.rows.push(TraceRow {
            t,
            y: y.iter().copied().collect(),
            u: u.iter().copied().collect(),
            u_cmd: u_cmd.iter().copied().collect(),
            x: x.iter().copied().collect(),
            x_hat,
            x_r,
            qp: diag,
        });

        x = match scenario.control_lag_div {
            Some(nd) => {
                let d1 = ts / nd as f64;
                let mid = stepper.advance(&x, &u_prev, d1);
                stepper.advance(&mid, &u, ts - d1)
            }
            None => stepper.advance(&x, &u, ts),
        };
        u_prev = u;
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
            trace.diverged = true;
            break;
        }
    }
    Ok(trace)
}

fn status_str(s: Option<QpStatus>) -> &'static str {
    match s {
        None => "none",
        Some(QpStatus::Optimal) => "optimal",
        Some(QpStatus::Infeasible) => "infeasible",
        Some(QpStatus::IterationLimit) => "iteration-limit",
    }
}

/// CSV column names in their fixed order:
/// t, y.i, u.i, x.i, xhat.i, qp.status, qp.obj, qp.nact, slack.i.
pub fn csv_header(trace: &Trace) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..trace.n_outputs).map(|i| format!("y.{i}")));
    h.extend((0..trace.n_inputs).map(|i| format!("u.{i}")));
    h.extend((0..trace.n_states).map(|i| format!("x.{i}")));
    h.extend((0..trace.n_estimates).map(|i| format!("xhat.{i}")));
    h.extend(["qp.status", "qp.obj", "qp.nact"].map(String::from));
    h.extend((0..trace.n_slacks).map(|i| format!("slack.{i}")));
    h
}

/// Shortest round-trip text, with −0 printed as 0.
fn num(v: f64) -> String {
    (v + 0.0).to_string()
}

pub fn write_csv<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(trace))?;
    for row in &trace.rows {
        let mut rec: Vec<String> = vec![num(row.t)];
        rec.extend(
            row.y
                .iter()
                .chain(&row.u)
                .chain(&row.x)
                .chain(&row.x_hat)
                .map(|v| num(*v)),
        );
        let q = row.qp.as_ref();
        rec.push(status_str(q.map(|d| d.status)).to_string());
        rec.push(num(q.map_or(0.0, |d| d.objective)));
        rec.push(q.map_or(0, |d| d.n_active).to_string());
        rec.extend(
            (0..trace.n_slacks)
                .map(|i| num(q.and_then(|d| d.slacks.get(i)).copied().unwrap_or(0.0))),
        );
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate numbers for reports.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TraceSummary {
    pub scenario: String,
    pub steps: usize,
    pub diverged: bool,
    pub max_abs_y: Vec<f64>,
    pub max_abs_u: Vec<f64>,
    /// Largest excursion of applied inputs outside their bounds.
    pub max_input_violation: f64,
    /// Largest excursion of outputs/states outside their (softened) bounds.
    pub max_soft_violation: f64,
    pub qp_iterations_mean: f64,
    pub qp_iterations_max: usize,
    pub solve_time_mean_s: f64,
    pub solve_time_max_s: f64,
    pub fallbacks: usize,
    /// RMS output difference from a comparison trace, when given.
    pub rms_output_difference: Option<f64>,
}

fn excess(v: f64, iv: &Option<Interval>) -> f64 {
    iv.map_or(0.0, |b| (v - b.hi).max(b.lo - v).max(0.0))
}

pub fn summarise(
    trace: &Trace,
    bounds: &MonitoredBounds,
    reference: Option<&Trace>,
) -> TraceSummary {
    let mut s = TraceSummary {
        scenario: trace.scenario.clone(),
        steps: trace.rows.len(),
        diverged: trace.diverged,
        max_abs_y: vec![0.0; trace.n_outputs],
        max_abs_u: vec![0.0; trace.n_inputs],
        ..Default::default()
    };
    let mut n_qp = 0usize;
    for row in &trace.rows {
        for (m, v) in s.max_abs_y.iter_mut().zip(&row.y) {
            *m = m.max(v.abs());
        }
        for (m, v) in s.max_abs_u.iter_mut().zip(&row.u) {
            *m = m.max(v.abs());
        }
        for (i, v) in row.u_cmd.iter().enumerate() {
            s.max_input_violation = s
                .max_input_violation
                .max(excess(*v, bounds.u.get(i).unwrap_or(&None)));
        }
        for (i, v) in row.y.iter().enumerate() {
            s.max_soft_violation = s
                .max_soft_violation
                .max(excess(*v, bounds.y.get(i).unwrap_or(&None)));
        }
        for (i, v) in row.x.iter().enumerate() {
            s.max_soft_violation = s
                .max_soft_violation
                .max(excess(*v, bounds.x.get(i).unwrap_or(&None)));
        }
        if let Some(d) = &row.qp {
            n_qp += 1;
            s.qp_iterations_mean += d.iterations as f64;
            s.qp_iterations_max = s.qp_iterations_max.max(d.iterations);
            s.solve_time_mean_s += d.solve_time_s;
            s.solve_time_max_s = s.solve_time_max_s.max(d.solve_time_s);
            s.fallbacks += d.fallback as usize;
        }
    }
    if n_qp > 0 {
        s.qp_iterations_mean /= n_qp as f64;
        s.solve_time_mean_s /= n_qp as f64;
    }
    s.rms_output_difference = reference.map(|r| {
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for (a, b) in trace.rows.iter().zip(&r.rows) {
            for (ya, yb) in a.y.iter().zip(&b.y) {
                acc += (ya - yb).powi(2);
                cnt += 1;
            }
        }
        if cnt == 0 {
            0.0
        } else {
            (acc / cnt as f64).sqrt()
        }
    });
    s
}

/// Largest per-sample input or output gap between the loop closed by
/// `pair.effective_controller()` and the unconstrained observer-based MPC
/// built from `r`, both started from `x0` on the discrete `plant`.
pub fn equivalence_gap(
    plant: &DtStateSpace,
    pair: &DesignPair,
    r: &ObserverRealisation,
    x0: &Vector,
    steps: usize,
    horizon: usize,
) -> Result<f64> {
    let cost = matching_cost(&r.kc, &Mat::identity(plant.n_inputs(), plant.n_inputs()))?;
    let cfg = MpcConfig::unconstrained(horizon, cost);
    let qp = condense(&design_model(pair), &cfg, Formulation::CrossTerm)?;
    let mpc = MpcController::new(r, pair, qp, None, Vec::new())?;
    let make = |controller| Scenario {
        name: String::new(),
        plant: PlantModel::LinearDiscrete(plant.clone()),
        x0: x0.clone(),
        ts: plant.ts,
        duration: steps as f64 * plant.ts,
        references: Vec::new(),
        disturbances: Vec::new(),
        noise: NoiseSpec::default(),
        faults: Vec::new(),
        controller,
        control_lag_div: None,
        bounds: MonitoredBounds::default(),
    };
    let base = simulate(&make(ControllerSpec::Baseline(pair.effective_controller())))?;
    let obs = simulate(&make(ControllerSpec::Mpc(Box::new(mpc))))?;
    if base.diverged || obs.diverged {
        return Ok(f64::INFINITY);
    }
    let mut worst: f64 = 0.0;
    for (a, b) in base.rows.iter().zip(&obs.rows) {
        for (p, q) in a.u.iter().zip(&b.u).chain(a.y.iter().zip(&b.y)) {
            worst = worst.max((p - q).abs());
        }
    }
    Ok(worst)
}
