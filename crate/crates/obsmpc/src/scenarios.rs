//! Named closed-loop experiments for the two built-in case studies.
//!
//! Satellite: filter form with a dipole, R3/R4 realisations, Ts/10 control lag,
//! step torque disturbance. Pendulum: loop-shifted predictor form, CPR2, shaped
//! reference prefilter, nonlinear plant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, PendulumParams};
use crate::mpc::{
    condense, design_model, effect_cost, matching_cost, Formulation, Interval, MpcConfig,
};
use crate::numerics::{mat, Mat, Vector};
use crate::realisation::{
    prepare, search_realisations, DelayHandling, DesignPair, Form, ObserverRealisation,
    SearchOptions, SearchReport,
};
use crate::runtime::{build_prefilter, MpcController, PrefilterKind};
use crate::sim::{
    ControllerSpec, Disturbance, DisturbanceKind, Fault, MonitoredBounds, NoiseSpec, PlantModel,
    ReferenceProgram, Scenario,
};

/// Step torque (N·m) applied to the satellite disturbance state.
///
/// Calibrated so that the baseline's peak torque command is about 0.15 N·m,
/// which makes the 0.11 bound of the constrained cases active.
pub const SATELLITE_DISTURBANCE: f64 = 0.104;
/// Time of the satellite disturbance step (s).
pub const SATELLITE_DISTURBANCE_TIME: f64 = 1.0;
pub const SATELLITE_DURATION: f64 = 30.0;
pub const SATELLITE_N_DIV: usize = 10;
pub const PENDULUM_DURATION: f64 = 20.0;
pub const HORIZON: usize = 15;

/// Overrides accepted by every library scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOptions {
    pub duration: Option<f64>,
    /// Initial plant state (custom scenarios only).
    pub x0: Option<Vec<f64>>,
    pub disturbance: Option<f64>,
    pub noise_sigma: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

pub const SCENARIO_NAMES: [&str; 9] = [
    "satellite-baseline",
    "satellite-case-1",
    "satellite-case-2",
    "satellite-case-3",
    "satellite-case-4",
    "satellite-case-5",
    "pendulum-baseline",
    "pendulum-case-1",
    "pendulum-case-2",
];

/// Prepared design pair and its ranked realisations.
#[derive(Clone, Debug)]
pub struct CaseDesign {
    pub pair: DesignPair,
    pub report: SearchReport,
}

impl CaseDesign {
    /// Realisation by S/O label, e.g. "SOOOSS".
    pub fn by_label(&self, label: &str) -> Result<&ObserverRealisation> {
        self.report
            .ranked
            .iter()
            .map(|r| &r.realisation)
            .find(|r| r.choice.labels() == label)
            .ok_or_else(|| Error::Infeasible(format!("no feasible realisation labelled {label}")))
    }
}

pub fn satellite_design() -> Result<CaseDesign> {
    let pair = prepare(
        Form::Filter,
        &models::satellite()?,
        &models::satellite_controller()?,
        Some(models::SATELLITE_DIPOLE_W),
        DelayHandling::LoopShift,
    )?;
    let opts = SearchOptions {
        disturbance_states: models::SATELLITE_DISTURBANCE_STATES,
        margin_channel: Some(0),
        ..SearchOptions::default()
    };
    let report = search_realisations(&pair, &opts)?;
    Ok(CaseDesign { pair, report })
}

pub fn pendulum_design() -> Result<CaseDesign> {
    let pair = prepare(
        Form::Predictor,
        &models::pendulum()?,
        &models::pendulum_controller()?,
        None,
        DelayHandling::LoopShift,
    )?;
    let report = search_realisations(&pair, &SearchOptions::default())?;
    Ok(CaseDesign { pair, report })
}

/// Satellite realisation labels in table order R1..R4.
pub const SATELLITE_LABELS: [&str; 4] = ["OOSSOS", "SSOOOS", "SOOOSS", "OSOOSS"];
/// Pendulum realisation labels in table order CPR1..CPR3.
pub const PENDULUM_LABELS: [&str; 3] = ["SSSSOO", "OOSSSS", "SSOOSS"];

/// Shaped-prefilter selection: zero cart-velocity and angular references.
pub fn pendulum_prefilter_default() -> PrefilterKind {
    PrefilterKind::Shaped {
        l1: mat(
            3,
            4,
            &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ),
        l2: Mat::zeros(3, 2),
    }
}

/// Variant that pins the position reference to the raw setpoint.
pub fn pendulum_prefilter_position() -> PrefilterKind {
    PrefilterKind::Shaped {
        l1: mat(
            3,
            4,
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ),
        l2: mat(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    }
}

/// Builds an MPC controller for a realisation.
pub fn mpc_controller(
    design: &CaseDesign,
    r: &ObserverRealisation,
    cfg: &MpcConfig,
    prefilter: Option<PrefilterKind>,
) -> Result<MpcController> {
    let model = design_model(&design.pair);
    let qp = condense(&model, cfg, Formulation::CrossTerm)?;
    let pf = prefilter
        .map(|k| build_prefilter(k, r, &design.pair))
        .transpose()?;
    MpcController::new(r, &design.pair, qp, pf, cfg.u_bounds.clone())
}

fn satellite_cfg(case: usize, r: &ObserverRealisation, b: &Mat) -> Result<MpcConfig> {
    let cost = match case {
        3 | 5 => effect_cost(
            &r.kc,
            b,
            &(Mat::identity(3, 3) * 1e3),
            &(Mat::identity(2, 2) * 1e-3),
        )?,
        _ => matching_cost(&r.kc, &Mat::identity(2, 2))?,
    };
    let mut cfg = MpcConfig::unconstrained(HORIZON, cost);
    let ub = match case {
        2 | 3 => Some(0.11),
        4 => Some(1.0),
        5 => Some(0.15),
        _ => None,
    };
    if let Some(v) = ub {
        cfg.u_bounds = vec![Some(Interval::symmetric(v)); 2];
    }
    if case >= 4 {
        cfg.y_bounds = vec![Some(Interval::symmetric(0.01))];
    }
    Ok(cfg)
}

fn pendulum_cfg(case: usize, r: &ObserverRealisation) -> Result<MpcConfig> {
    let mut cfg = MpcConfig::unconstrained(HORIZON, matching_cost(&r.kc, &Mat::identity(1, 1))?);
    cfg.tracking = true;
    if case == 2 {
        cfg.x_bounds = vec![
            None,
            Some(Interval::symmetric(0.7)),
            Some(Interval::symmetric(0.175)),
            Some(Interval::symmetric(0.3)),
        ];
    }
    Ok(cfg)
}

fn base_scenario(
    name: &str,
    plant: PlantModel,
    ts: f64,
    duration: f64,
    controller: ControllerSpec,
) -> Scenario {
    Scenario {
        name: name.to_string(),
        x0: Vector::zeros(plant.n_states()),
        plant,
        ts,
        duration,
        references: Vec::new(),
        disturbances: Vec::new(),
        noise: NoiseSpec::default(),
        faults: Vec::new(),
        controller,
        control_lag_div: None,
        bounds: MonitoredBounds::default(),
    }
}

/// Holds the designs so several scenarios can be built without repeating the search.
pub struct Library {
    pub satellite: CaseDesign,
    pub pendulum: CaseDesign,
}

impl Library {
    pub fn new() -> Result<Self> {
        Ok(Self {
            satellite: satellite_design()?,
            pendulum: pendulum_design()?,
        })
    }

    pub fn scenario(&self, name: &str, opts: &ScenarioOptions) -> Result<Scenario> {
        let mut sc = if let Some(case) = name.strip_prefix("satellite-") {
            self.satellite_scenario(case, opts)?
        } else if let Some(case) = name.strip_prefix("pendulum-") {
            self.pendulum_scenario(case)?
        } else {
            return Err(Error::Config(format!("unknown scenario '{name}'")));
        };
        sc.name = name.to_string();
        if let Some(d) = opts.duration {
            sc.duration = d;
        }
        if let Some(s) = &opts.noise_sigma {
            sc.noise.sigma = s.clone();
        }
        if let Some(seed) = opts.seed {
            sc.noise.seed = seed;
        }
        Ok(sc)
    }

    /// Every named scenario with default options.
    pub fn all(&self) -> Result<Vec<Scenario>> {
        SCENARIO_NAMES
            .iter()
            .map(|n| self.scenario(n, &ScenarioOptions::default()))
            .collect()
    }

    fn satellite_scenario(&self, case: &str, opts: &ScenarioOptions) -> Result<Scenario> {
        let plant = PlantModel::LinearContinuous(models::satellite_ct()?);
        let ts = models::SATELLITE_TS;
        let mut sc = if case == "baseline" {
            base_scenario(
                "",
                plant,
                ts,
                SATELLITE_DURATION,
                ControllerSpec::Baseline(models::satellite_controller()?),
            )
        } else {
            let n: usize = case
                .strip_prefix("case-")
                .and_then(|c| c.parse().ok())
                .filter(|c| (1..=5).contains(c))
                .ok_or_else(|| Error::Config(format!("unknown scenario 'satellite-{case}'")))?;
            let label = if n <= 3 {
                SATELLITE_LABELS[2]
            } else {
                SATELLITE_LABELS[3]
            };
            let r = self.satellite.by_label(label)?;
            let cfg = satellite_cfg(n, r, &self.satellite.pair.plant.b)?;
            let ctrl = mpc_controller(&self.satellite, r, &cfg, None)?;
            let mut sc = base_scenario(
                "",
                plant,
                ts,
                SATELLITE_DURATION,
                ControllerSpec::Mpc(Box::new(ctrl)),
            );
            sc.control_lag_div = Some(SATELLITE_N_DIV);
            sc.bounds = MonitoredBounds {
                u: cfg.u_bounds.clone(),
                y: cfg.y_bounds.clone(),
                x: Vec::new(),
            };
            if n == 5 {
                sc.faults.push(Fault {
                    time: 3.0,
                    actuator: 0,
                    value: 0.0,
                });
            }
            sc
        };
        sc.disturbances.push(Disturbance {
            time: SATELLITE_DISTURBANCE_TIME,
            kind: DisturbanceKind::StateStep {
                state: 2,
                value: opts.disturbance.unwrap_or(SATELLITE_DISTURBANCE),
            },
        });
        Ok(sc)
    }

    fn pendulum_scenario(&self, case: &str) -> Result<Scenario> {
        let plant = PlantModel::PendulumNonlinear(PendulumParams::default());
        let ts = models::PENDULUM_TS;
        let mut sc = match case {
            "baseline" => base_scenario(
                "",
                plant,
                ts,
                PENDULUM_DURATION,
                ControllerSpec::Baseline(models::pendulum_controller()?),
            ),
            "case-1" | "case-2" => {
                let n = if case == "case-1" { 1 } else { 2 };
                let r = self.pendulum.by_label(PENDULUM_LABELS[1])?;
                let cfg = pendulum_cfg(n, r)?;
                let ctrl =
                    mpc_controller(&self.pendulum, r, &cfg, Some(pendulum_prefilter_default()))?;
                let mut sc = base_scenario(
                    "",
                    plant,
                    ts,
                    PENDULUM_DURATION,
                    ControllerSpec::Mpc(Box::new(ctrl)),
                );
                sc.bounds = MonitoredBounds {
                    u: Vec::new(),
                    y: Vec::new(),
                    x: cfg.x_bounds.clone(),
                };
                sc
            }
            _ => return Err(Error::Config(format!("unknown scenario 'pendulum-{case}'"))),
        };
        sc.references = vec![
            ReferenceProgram::constant(1.0),
            ReferenceProgram::constant(0.0),
        ];
        Ok(sc)
    }
}
