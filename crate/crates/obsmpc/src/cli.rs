//! Command-line front end: `realise`, `simulate`, `verify`, `discretise`.
//!
//! Exit codes: 0 success, 1 domain error (no feasible realisation, failed
//! check, numerical failure), 2 configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{builtin_project, ProjectConfig};
use crate::error::{Error, Result};
use crate::lti::DtStateSpace;
use crate::mpc::{
    condense, design_model, effect_cost, matching_cost, CostKind, Formulation, MpcConfig,
};
use crate::numerics::{eigenvalues, Mat, Vector};
use crate::realisation::{
    check_invariants, gains_controller, realisation_controller, search_realisations,
    verify_equivalence, SearchReport,
};
use crate::runtime::MpcController;
use crate::scenarios::{Library, ScenarioOptions};
use crate::sim::{
    simulate, summarise, write_csv, ControllerSpec, MonitoredBounds, PlantModel, Scenario, Trace,
    TraceSummary,
};

#[derive(Debug, Parser)]
#[command(
    name = "obsmpc",
    version,
    about = "Observer-based MPC from an existing LTI controller"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Project configuration (JSON). `builtin:satellite` and `builtin:pendulum` are accepted.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Scenario name for `simulate`.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Output file (report JSON, trace CSV or discretised JSON).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Noise seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the realisation search (1 = sequential).
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate, solve and rank observer-based realisations.
    Realise,
    /// Run a closed-loop scenario and write its trace.
    Simulate,
    /// Check realisations (or supplied gains) against the original controller.
    Verify,
    /// Print the discrete plant and controller.
    Discretise,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<ProjectConfig> {
    match cli.config.as_deref() {
        None => Err(Error::Config(
            "--config is required for this command".into(),
        )),
        Some(s) => match s.strip_prefix("builtin:") {
            Some(name) => builtin_project(name).map_err(|e| Error::Config(e.to_string())),
            None => ProjectConfig::load(Path::new(s)),
        },
    }
}

fn with_threads<T: Send>(n: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match n {
        Some(0) => Err(Error::Config("--parallel must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Realise => cmd_realise(cli, out),
        Command::Simulate => cmd_simulate(cli, out),
        Command::Verify => cmd_verify(cli, out),
        Command::Discretise => cmd_discretise(cli, out),
    }
}

fn emit(cli: &Cli, out: &mut dyn Write, text: &str) -> Result<()> {
    match &cli.out {
        Some(p) => std::fs::write(p, text)?,
        None => writeln!(out, "{text}")?,
    }
    Ok(())
}

fn fmt_poles(v: &[[f64; 2]]) -> Vec<String> {
    v.iter()
        .map(|[re, im]| {
            if im.abs() < 1e-12 {
                format!("{re:.4}")
            } else {
                format!("{re:.4}{im:+.4}j")
            }
        })
        .collect()
}

#[derive(Serialize)]
struct RealiseRow {
    rank: usize,
    index: usize,
    labels: String,
    state_feedback_poles: Vec<String>,
    observer_poles: Vec<String>,
    extra_poles: Vec<String>,
    h2_noise: f64,
    h2_output_estimate: f64,
    h2_innovation: f64,
    h2_dist: Option<f64>,
    product: f64,
    gain_margin: Option<f64>,
    phase_margin_deg: Option<f64>,
    delay_margin_samples: Option<f64>,
    kc: Vec<Vec<f64>>,
    kf: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct RejectedRow {
    index: usize,
    labels: String,
    reason: String,
}

#[derive(Serialize)]
struct RealiseReport {
    form: crate::realisation::Form,
    plant_states: usize,
    controller_states: usize,
    closed_loop_poles: Vec<String>,
    n_choices: usize,
    n_feasible: usize,
    ranked: Vec<RealiseRow>,
    rejected: Vec<RejectedRow>,
}

fn mat_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn build_report(cfg: &ProjectConfig, report: &SearchReport) -> Result<RealiseReport> {
    let pair = cfg.design_pair()?;
    let poles = &report.closed_loop_poles;
    let pick = |ix: &[usize]| ix.iter().map(|&i| poles[i]).collect::<Vec<_>>();
    Ok(RealiseReport {
        form: pair.form,
        plant_states: pair.plant.n(),
        controller_states: pair.controller.n(),
        closed_loop_poles: fmt_poles(poles),
        n_choices: report.n_choices,
        n_feasible: report.ranked.len(),
        ranked: report
            .ranked
            .iter()
            .enumerate()
            .map(|(rank, r)| {
                let m = r.score.margins.as_ref();
                RealiseRow {
                    rank: rank + 1,
                    index: r.index,
                    labels: r.realisation.choice.labels(),
                    state_feedback_poles: fmt_poles(&pick(
                        &r.realisation.choice.state_feedback_set,
                    )),
                    observer_poles: fmt_poles(&pick(&r.realisation.choice.observer_set)),
                    extra_poles: fmt_poles(&r.realisation.extra_poles),
                    h2_noise: r.score.h2_noise,
                    h2_output_estimate: r.score.h2_output_estimate,
                    h2_innovation: r.score.h2_innovation,
                    h2_dist: r.score.h2_dist,
                    product: r.score.product,
                    gain_margin: m.and_then(|m| finite(m.gain_margin)),
                    phase_margin_deg: m.and_then(|m| finite(m.phase_margin.to_degrees())),
                    delay_margin_samples: m.and_then(|m| finite(m.delay_margin)),
                    kc: mat_rows(&r.realisation.kc),
                    kf: mat_rows(&r.realisation.kf),
                }
            })
            .collect(),
        rejected: report
            .rejected
            .iter()
            .map(|r| RejectedRow {
                index: r.index,
                labels: r.choice.labels(),
                reason: r.reason.clone(),
            })
            .collect(),
    })
}

fn run_search(cli: &Cli, cfg: &ProjectConfig) -> Result<SearchReport> {
    let pair = cfg.design_pair()?;
    let mut opts = cfg.search_options()?;
    opts.parallel = cli.parallel != Some(1);
    with_threads(cli.parallel, || search_realisations(&pair, &opts))
}

fn cmd_realise(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = load_config(cli)?;
    let report = run_search(cli, &cfg)?;
    let text = serde_json::to_string_pretty(&build_report(&cfg, &report)?)?;
    emit(cli, out, &text)?;
    if report.ranked.is_empty() {
        return Err(Error::Infeasible(format!(
            "none of the {} choices gave a realisation",
            report.n_choices
        )));
    }
    Ok(0)
}

#[derive(Serialize)]
struct VerifyRow {
    label: String,
    equivalence_error: f64,
    spectrum_error: f64,
    invariants: Option<String>,
    pass: bool,
}

const VERIFY_TOL: f64 = 1e-7;

fn cmd_verify(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = load_config(cli)?;
    let pair = cfg.design_pair()?;
    let k0 = pair.effective_controller();
    let acl = pair.closed_loop()?;
    let target = eigenvalues(&acl)?;
    let loop_spectrum = |k: &DtStateSpace| -> Result<f64> {
        let m = crate::lti::closed_loop_matrix(&pair.plant, &strip(k, &pair))?;
        let mut ev = eigenvalues(&m)?;
        // The observer adds n poles; the loop must contain every original pole.
        let mut worst: f64 = 0.0;
        for p in &target {
            let (i, d) = ev
                .iter()
                .enumerate()
                .map(|(i, q)| (i, (q - p).norm()))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            worst = worst.max(d);
            if i < ev.len() {
                ev.remove(i);
            }
        }
        Ok(worst)
    };
    let mut rows = Vec::new();
    if cfg.realisations.is_empty() {
        let report = run_search(cli, &cfg)?;
        if report.ranked.is_empty() {
            return Err(Error::Infeasible(
                "no feasible realisation to verify".into(),
            ));
        }
        let eig = crate::numerics::eig_paired(&acl)?;
        for r in &report.ranked {
            let k = realisation_controller(&r.realisation, &pair)?;
            let eq = verify_equivalence(&k, &k0, 200)?;
            let inv = check_invariants(&pair, &r.realisation, &eig, &acl);
            let sp = loop_spectrum(&k)?;
            rows.push(VerifyRow {
                label: r.realisation.choice.labels(),
                pass: eq <= VERIFY_TOL && inv.is_none() && sp <= 1e-6,
                equivalence_error: eq,
                spectrum_error: sp,
                invariants: inv,
            });
        }
    } else {
        for g in &cfg.realisations {
            let k = gains_controller(pair.form, &pair, &g.kc, &g.kf)?;
            let eq = verify_equivalence(&k, &k0, 200)?;
            let sp = loop_spectrum(&k)?;
            rows.push(VerifyRow {
                label: g.label.clone(),
                pass: eq <= VERIFY_TOL && sp <= 1e-6,
                equivalence_error: eq,
                spectrum_error: sp,
                invariants: None,
            });
        }
    }
    let all = rows.iter().all(|r| r.pass);
    for r in &rows {
        writeln!(
            out,
            "{} {}: equivalence {:.3e}, spectrum {:.3e}{}",
            if r.pass { "PASS" } else { "FAIL" },
            r.label,
            r.equivalence_error,
            r.spectrum_error,
            r.invariants
                .as_deref()
                .map(|s| format!(", {s}"))
                .unwrap_or_default()
        )?;
    }
    if let Some(p) = &cli.out {
        std::fs::write(p, serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(if all { 0 } else { 1 })
}

/// Loop-shifted designs close the loop around the shifted plant without the outer term.
fn strip(k: &DtStateSpace, pair: &crate::realisation::DesignPair) -> DtStateSpace {
    let mut k = k.clone();
    k.d = &k.d - &pair.outer_feedthrough;
    k
}

#[derive(Serialize)]
struct Discretised {
    plant: DtStateSpace,
    controller: DtStateSpace,
}

fn cmd_discretise(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = load_config(cli)?;
    let (plant, controller) = cfg.discrete_pair()?;
    emit(
        cli,
        out,
        &serde_json::to_string_pretty(&Discretised { plant, controller })?,
    )?;
    Ok(0)
}

#[derive(Serialize)]
pub struct Comparison {
    pub scenario: String,
    pub rms_output_difference: f64,
    pub max_output_difference: f64,
}

#[derive(Serialize)]
pub struct SimulateReport {
    pub summary: TraceSummary,
    pub vs_baseline: Option<Comparison>,
    pub vs_unconstrained: Option<Comparison>,
}

fn compare(a: &Trace, b: &Trace) -> Comparison {
    let mut max: f64 = 0.0;
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        for (x, y) in ra.y.iter().zip(&rb.y) {
            max = max.max((x - y).abs());
        }
    }
    let rms = summarise(a, &MonitoredBounds::default(), Some(b))
        .rms_output_difference
        .unwrap_or(0.0);
    Comparison {
        scenario: b.scenario.clone(),
        rms_output_difference: rms,
        max_output_difference: max,
    }
}

fn custom_scenario(
    cfg: &ProjectConfig,
    report: &SearchReport,
    opts: &ScenarioOptions,
) -> Result<Scenario> {
    let mo = cfg
        .mpc
        .clone()
        .ok_or_else(|| Error::Config("custom scenario needs an \"mpc\" section".into()))?;
    let best = report
        .ranked
        .first()
        .ok_or_else(|| Error::Infeasible("no feasible realisation".into()))?;
    let r = &best.realisation;
    let pair = cfg.design_pair()?;
    let (plant, _) = cfg.discrete_pair()?;
    let nu = plant.n_inputs();
    let cost = match mo.cost {
        CostKind::Matching => matching_cost(
            &r.kc,
            &mo.r.clone().unwrap_or_else(|| Mat::identity(nu, nu)),
        )?,
        CostKind::Effect => effect_cost(
            &r.kc,
            &pair.plant.b,
            &mo.q1
                .clone()
                .ok_or_else(|| Error::Config("effect cost needs q1".into()))?,
            &mo.r1
                .clone()
                .ok_or_else(|| Error::Config("effect cost needs r1".into()))?,
        )?,
    };
    let mpc = MpcConfig {
        horizon: mo.horizon,
        cost,
        u_bounds: mo.u_bounds.clone(),
        y_bounds: mo.y_bounds.clone(),
        x_bounds: mo.x_bounds.clone(),
        soft_output_weight: mo.soft_output_weight,
        tracking: false,
    };
    let qp = condense(&design_model(&pair), &mpc, Formulation::CrossTerm)?;
    let ctrl = MpcController::new(r, &pair, qp, None, mpc.u_bounds.clone())?;
    let n = plant.n();
    let x0 = match &opts.x0 {
        Some(v) if v.len() == n => Vector::from_column_slice(v),
        Some(_) => return Err(Error::Config(format!("x0 must have {n} entries"))),
        None => Vector::zeros(n),
    };
    Ok(Scenario {
        name: "custom".into(),
        x0,
        ts: plant.ts,
        duration: opts.duration.unwrap_or(100.0 * plant.ts),
        plant: PlantModel::LinearDiscrete(plant),
        references: Vec::new(),
        disturbances: Vec::new(),
        noise: Default::default(),
        faults: Vec::new(),
        controller: ControllerSpec::Mpc(Box::new(ctrl)),
        control_lag_div: None,
        bounds: MonitoredBounds {
            u: mpc.u_bounds,
            y: mpc.y_bounds,
            x: mpc.x_bounds,
        },
    })
}

fn cmd_simulate(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let name = cli
        .scenario
        .as_deref()
        .ok_or_else(|| Error::Config("--scenario is required".into()))?;
    let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
    let mut opts = cfg
        .as_ref()
        .and_then(|c| c.scenario.clone())
        .unwrap_or_default();
    if let Some(s) = cli.seed {
        opts.seed = Some(s);
    }
    let (trace, sc, baseline, unconstrained) = if name == "custom" {
        let cfg = cfg.ok_or_else(|| Error::Config("the custom scenario needs --config".into()))?;
        let report = run_search(cli, &cfg)?;
        let mut sc = custom_scenario(&cfg, &report, &opts)?;
        sc.noise.sigma = opts.noise_sigma.clone().unwrap_or_default();
        sc.noise.seed = opts.seed.unwrap_or(0);
        (simulate(&sc)?, sc, None, None)
    } else {
        if !crate::scenarios::SCENARIO_NAMES.contains(&name) {
            return Err(Error::Config(format!("unknown scenario '{name}'")));
        }
        let lib = with_threads(cli.parallel, Library::new)?;
        let sc = lib.scenario(name, &opts)?;
        let trace = simulate(&sc)?;
        let family = if name.starts_with("satellite") {
            "satellite"
        } else {
            "pendulum"
        };
        let baseline = if name.ends_with("baseline") {
            None
        } else {
            Some(simulate(
                &lib.scenario(&format!("{family}-baseline"), &opts)?,
            )?)
        };
        let unconstrained = match name {
            "satellite-case-2" | "satellite-case-3" | "satellite-case-4" | "satellite-case-5" => {
                Some(simulate(&lib.scenario("satellite-case-1", &opts)?)?)
            }
            "pendulum-case-2" => Some(simulate(&lib.scenario("pendulum-case-1", &opts)?)?),
            _ => None,
        };
        (trace, sc, baseline, unconstrained)
    };
    if let Some(p) = &cli.out {
        write_csv(&trace, std::fs::File::create(p)?)?;
    }
    let report = SimulateReport {
        summary: summarise(&trace, &sc.bounds, None),
        vs_baseline: baseline.as_ref().map(|b| compare(&trace, b)),
        vs_unconstrained: unconstrained.as_ref().map(|b| compare(&trace, b)),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(if trace.diverged { 1 } else { 0 })
}
