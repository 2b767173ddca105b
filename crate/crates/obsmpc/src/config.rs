//! JSON project configuration: plant and controller definitions, pipeline
//! options, MPC settings and scenario overrides.
//!
//! ```json
//! {
//!   "plant": { "kind": "builtin", "name": "satellite" },
//!   "controller": { "kind": "builtin", "name": "satellite" },
//!   "pipeline": { "form": "filter", "dipole": 50.0, "disturbance_states": 1, "margin_channel": 0 }
//! }
//! ```
//!
//! Matrices are lists of rows. Continuous systems carry `ts` and a
//! discretisation `method` (`zoh` or `tustin`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{augment_disturbances, c2d_tustin, c2d_zoh, CtStateSpace, DtStateSpace};
use crate::models;
use crate::mpc::Interval;
use crate::numerics::{rows, Mat};
use crate::realisation::{prepare, DelayHandling, DesignPair, Form, NoiseMetric, SearchOptions};
use crate::scenarios::ScenarioOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretisation {
    Zoh,
    Tustin,
}

/// A plant or controller definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemConfig {
    /// "satellite" or "pendulum".
    Builtin { name: String },
    Continuous {
        #[serde(flatten)]
        sys: CtStateSpace,
        ts: f64,
        method: Discretisation,
    },
    Discrete {
        #[serde(flatten)]
        sys: DtStateSpace,
    },
}

/// Options for model preparation and the realisation search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub form: Form,
    /// Dipole parameter W for the filter form (omit when K(0) = 0 already).
    pub dipole: Option<f64>,
    pub delay: DelayHandling,
    /// Constant-disturbance input map E; appended as trailing states.
    #[serde(with = "opt_rows")]
    pub disturbance_input: Option<Mat>,
    /// Trailing states of the plant that are disturbance states.
    pub disturbance_states: usize,
    pub qn: f64,
    pub rn: f64,
    pub noise_metric: NoiseMetric,
    pub margin_channel: Option<usize>,
    pub forced_s: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let s = SearchOptions::default();
        Self {
            form: Form::Filter,
            dipole: None,
            delay: DelayHandling::LoopShift,
            disturbance_input: None,
            disturbance_states: 0,
            qn: s.qn,
            rn: s.rn,
            noise_metric: s.noise_metric,
            margin_channel: None,
            forced_s: Vec::new(),
        }
    }
}

impl PipelineConfig {
    /// Case-study settings for a built-in model.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "satellite" => Ok(Self {
                form: Form::Filter,
                dipole: Some(models::SATELLITE_DIPOLE_W),
                disturbance_states: models::SATELLITE_DISTURBANCE_STATES,
                margin_channel: Some(0),
                ..Self::default()
            }),
            "pendulum" => Ok(Self {
                form: Form::Predictor,
                ..Self::default()
            }),
            _ => Err(Error::Config(format!("unknown built-in model '{name}'"))),
        }
    }
}

mod opt_rows {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| m.row(i).iter().copied().collect::<Vec<f64>>())
                    .collect::<Vec<_>>()
            })
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        rows.map(|r| crate::numerics::rows::from_rows(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// MPC options as they appear in the file (gains come from the realisation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcOptions {
    pub horizon: usize,
    pub cost: crate::mpc::CostKind,
    #[serde(with = "opt_rows")]
    pub r: Option<Mat>,
    #[serde(with = "opt_rows")]
    pub q1: Option<Mat>,
    #[serde(with = "opt_rows")]
    pub r1: Option<Mat>,
    pub u_bounds: Vec<Option<Interval>>,
    pub y_bounds: Vec<Option<Interval>>,
    pub x_bounds: Vec<Option<Interval>>,
    pub soft_output_weight: f64,
}

impl Default for MpcOptions {
    fn default() -> Self {
        Self {
            horizon: 15,
            cost: crate::mpc::CostKind::Matching,
            r: None,
            q1: None,
            r1: None,
            u_bounds: Vec::new(),
            y_bounds: Vec::new(),
            x_bounds: Vec::new(),
            soft_output_weight: crate::mpc::default_soft(),
        }
    }
}

/// Externally supplied gains, checked by `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuppliedGains {
    pub label: String,
    #[serde(with = "rows")]
    pub kc: Mat,
    #[serde(with = "rows")]
    pub kf: Mat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub plant: SystemConfig,
    pub controller: SystemConfig,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
    #[serde(default)]
    pub mpc: Option<MpcOptions>,
    #[serde(default)]
    pub scenario: Option<ScenarioOptions>,
    #[serde(default)]
    pub realisations: Vec<SuppliedGains>,
}

impl ProjectConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Dimension checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        let plant = resolve_plant(&self.plant).map_err(as_config)?;
        let k = resolve_controller(&self.controller).map_err(as_config)?;
        if k.n_inputs() != plant.n_outputs() || k.n_outputs() != plant.n_inputs() {
            return Err(Error::Config(format!(
                "controller is {}×{} but the plant needs {}×{}",
                k.n_outputs(),
                k.n_inputs(),
                plant.n_inputs(),
                plant.n_outputs()
            )));
        }
        if (plant.ts - k.ts).abs() > 1e-12 * plant.ts {
            return Err(Error::Config(
                "plant and controller sample periods differ".into(),
            ));
        }
        let p = self.pipeline()?;
        if let Some(e) = &p.disturbance_input {
            if e.nrows() != plant.n() {
                return Err(Error::Config(
                    "disturbance_input must have one row per plant state".into(),
                ));
            }
        }
        Ok(())
    }

    /// Pipeline options, falling back to the built-in case-study settings.
    pub fn pipeline(&self) -> Result<PipelineConfig> {
        match (&self.pipeline, &self.plant) {
            (Some(p), _) => Ok(p.clone()),
            (None, SystemConfig::Builtin { name }) => PipelineConfig::builtin(name),
            (None, _) => Ok(PipelineConfig::default()),
        }
    }

    pub fn search_options(&self) -> Result<SearchOptions> {
        let p = self.pipeline()?;
        let nd = p.disturbance_input.as_ref().map_or(0, |e| e.ncols());
        Ok(SearchOptions {
            qn: p.qn,
            rn: p.rn,
            forced_s: p.forced_s.clone(),
            disturbance_states: p.disturbance_states + nd,
            noise_metric: p.noise_metric,
            margin_channel: p.margin_channel,
            ..SearchOptions::default()
        })
    }

    /// Discrete plant (with any configured disturbance states) and controller.
    pub fn discrete_pair(&self) -> Result<(DtStateSpace, DtStateSpace)> {
        let mut plant = resolve_plant(&self.plant)?;
        if let Some(e) = &self.pipeline()?.disturbance_input {
            plant = augment_disturbances(&plant, e)?;
        }
        Ok((plant, resolve_controller(&self.controller)?))
    }

    pub fn design_pair(&self) -> Result<DesignPair> {
        let (g, k) = self.discrete_pair()?;
        let p = self.pipeline()?;
        prepare(p.form, &g, &k, p.dipole, p.delay)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn discretise(sys: &CtStateSpace, ts: f64, method: Discretisation) -> Result<DtStateSpace> {
    match method {
        Discretisation::Zoh => c2d_zoh(sys, ts),
        Discretisation::Tustin => c2d_tustin(sys, ts),
    }
}

fn check_system(sys: &SystemConfig) -> Result<()> {
    match sys {
        SystemConfig::Continuous { sys, .. } => {
            CtStateSpace::new(sys.a.clone(), sys.b.clone(), sys.c.clone(), sys.d.clone())
                .map(|_| ())
        }
        SystemConfig::Discrete { sys } => DtStateSpace::new(
            sys.a.clone(),
            sys.b.clone(),
            sys.c.clone(),
            sys.d.clone(),
            sys.ts,
        )
        .map(|_| ()),
        SystemConfig::Builtin { .. } => Ok(()),
    }
}

pub fn resolve_plant(sys: &SystemConfig) -> Result<DtStateSpace> {
    check_system(sys)?;
    match sys {
        SystemConfig::Builtin { name } => match name.as_str() {
            "satellite" => models::satellite(),
            "pendulum" => models::pendulum(),
            _ => Err(Error::Config(format!("unknown built-in plant '{name}'"))),
        },
        SystemConfig::Continuous { sys, ts, method } => discretise(sys, *ts, *method),
        SystemConfig::Discrete { sys } => Ok(sys.clone()),
    }
}

pub fn resolve_controller(sys: &SystemConfig) -> Result<DtStateSpace> {
    check_system(sys)?;
    match sys {
        SystemConfig::Builtin { name } => match name.as_str() {
            "satellite" => models::satellite_controller(),
            "pendulum" => models::pendulum_controller(),
            _ => Err(Error::Config(format!(
                "unknown built-in controller '{name}'"
            ))),
        },
        SystemConfig::Continuous { sys, ts, method } => discretise(sys, *ts, *method),
        SystemConfig::Discrete { sys } => Ok(sys.clone()),
    }
}

/// Config for a built-in case study.
pub fn builtin_project(name: &str) -> Result<ProjectConfig> {
    let sys = SystemConfig::Builtin {
        name: name.to_string(),
    };
    let cfg = ProjectConfig {
        plant: sys.clone(),
        controller: sys,
        pipeline: Some(PipelineConfig::builtin(name)?),
        mpc: None,
        scenario: None,
        realisations: Vec::new(),
    };
    cfg.validate()?;
    Ok(cfg)
}
