use std::path::PathBuf;

use obsmpc::cli::run;
use obsmpc::config::{builtin_project, ProjectConfig};
use obsmpc::models;
use serde_json::{json, Value};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("obsmpc").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("obsmpc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_json(name: &str, v: &Value) -> String {
    let p = scratch(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn discrete(a: Value, b: Value, c: Value, d: Value) -> Value {
    json!({ "kind": "discrete", "a": a, "b": b, "c": c, "d": d, "ts": 0.1 })
}

#[test]
fn config_round_trips() {
    for name in ["satellite", "pendulum"] {
        let cfg = builtin_project(name).unwrap();
        let back = ProjectConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
    assert!(builtin_project("rocket").is_err());
}

#[test]
fn realise_satellite_ranks_four_choices() {
    let (code, out, _) = call(&["realise", "--config", "builtin:satellite"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let ranked = v["ranked"].as_array().unwrap();
    assert_eq!(ranked.len(), 4);
    assert_eq!(ranked[0]["labels"], "SOOOSS");
    assert_eq!(v["form"], "filter");
}

#[test]
fn realise_pendulum_puts_second_choice_first() {
    let out_path = scratch("pendulum.json");
    let (code, stdout, _) = call(&[
        "realise",
        "--config",
        "builtin:pendulum",
        "--parallel",
        "1",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["ranked"][0]["labels"], "OOSSSS");
    assert_eq!(v["form"], "predictor");
}

#[test]
fn configuration_errors_exit_with_two() {
    let missing = scratch("does-not-exist.json");
    for args in [
        vec!["simulate", "--scenario", "no-such-scenario"],
        vec!["realise", "--config", missing.to_str().unwrap()],
        vec!["realise"],
        vec!["realise", "--config", "builtin:rocket"],
        vec!["simulate"],
        vec![
            "realise",
            "--config",
            "builtin:satellite",
            "--parallel",
            "0",
        ],
        vec!["frobnicate"],
    ] {
        let (code, _, err) = call(&args);
        assert_eq!(code, 2, "{args:?}: {err}");
        assert!(!err.is_empty());
    }
    let bad = scratch("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(
        call(&["discretise", "--config", bad.to_str().unwrap()]).0,
        2
    );
}

#[test]
fn dimension_mismatch_is_a_config_error() {
    let cfg = json!({
        "plant": discrete(json!([[0.5]]), json!([[1.0]]), json!([[1.0]]), json!([[0.0]])),
        "controller": discrete(json!([[0.5]]), json!([[1.0, 0.0]]), json!([[1.0]]), json!([[0.0, 0.0]])),
    });
    let path = write_json("mismatch.json", &cfg);
    assert_eq!(call(&["realise", "--config", &path]).0, 2);
}

#[test]
fn unstabilising_controller_is_a_domain_error() {
    let cfg = json!({
        "plant": discrete(json!([[1.5]]), json!([[1.0]]), json!([[1.0]]), json!([[0.0]])),
        "controller": discrete(json!([[0.5]]), json!([[0.0]]), json!([[0.0]]), json!([[0.0]])),
        "pipeline": { "form": "predictor" },
    });
    let path = write_json("unstable.json", &cfg);
    let (code, _, err) = call(&["realise", "--config", &path]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn verify_accepts_found_gains_and_rejects_perturbed_ones() {
    let (code, out, _) = call(&["verify", "--config", "builtin:satellite"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 4);

    let (_, report, _) = call(&["realise", "--config", "builtin:satellite"]);
    let v: Value = serde_json::from_str(&report).unwrap();
    let best = &v["ranked"][0];
    let mut kf = best["kf"].clone();
    kf[0][0] = json!(kf[0][0].as_f64().unwrap() * 1.01);
    let mut cfg: Value =
        serde_json::from_str(&builtin_project("satellite").unwrap().to_json().unwrap()).unwrap();
    cfg["realisations"] = json!([
        { "label": "found", "kc": best["kc"], "kf": best["kf"] },
        { "label": "perturbed", "kc": best["kc"], "kf": kf },
    ]);
    let path = write_json("supplied.json", &cfg);
    let (code, out, _) = call(&["verify", "--config", &path]);
    assert_eq!(code, 1);
    assert!(out.lines().any(|l| l.starts_with("PASS found")), "{out}");
    assert!(
        out.lines().any(|l| l.starts_with("FAIL perturbed")),
        "{out}"
    );
}

#[test]
fn simulate_writes_trace_and_report() {
    let csv_path = scratch("case3.csv");
    let (code, out, err) = call(&[
        "simulate",
        "--scenario",
        "satellite-case-3",
        "--seed",
        "4",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["summary"]["scenario"], "satellite-case-3");
    assert!(v["summary"]["max_input_violation"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["vs_baseline"]["scenario"], "satellite-baseline");
    assert_eq!(v["vs_unconstrained"]["scenario"], "satellite-case-1");
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with("t,y.0,u.0,u.1,x.0,"));
    assert_eq!(
        text.lines().count(),
        1 + v["summary"]["steps"].as_u64().unwrap() as usize
    );
}

#[test]
fn simulate_custom_scenario_from_config() {
    let cfg = json!({
        "plant": discrete(json!([[0.9, 0.1], [0.0, 0.7]]), json!([[0.0], [1.0]]), json!([[1.0, 0.0]]), json!([[0.0]])),
        "controller": discrete(json!([[0.5, 0.0], [0.0, 0.2]]), json!([[1.0], [1.0]]), json!([[-0.02, -0.01]]), json!([[0.0]])),
        "pipeline": { "form": "predictor" },
        "mpc": { "horizon": 10, "u_bounds": [{ "lo": -0.05, "hi": 0.05 }] },
        "scenario": { "duration": 3.0, "x0": [1.0, -2.0] },
    });
    let path = write_json("custom.json", &cfg);
    let (code, out, err) = call(&["simulate", "--scenario", "custom", "--config", &path]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["summary"]["steps"], 30);
    assert!(v["summary"]["max_abs_u"][0].as_f64().unwrap() <= 0.05 + 1e-12);
    assert_eq!(call(&["simulate", "--scenario", "custom"]).0, 2);
}

#[test]
fn discretise_prints_both_systems() {
    let (code, out, _) = call(&["discretise", "--config", "builtin:pendulum"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let plant: obsmpc::lti::DtStateSpace = serde_json::from_value(v["plant"].clone()).unwrap();
    let ctrl: obsmpc::lti::DtStateSpace = serde_json::from_value(v["controller"].clone()).unwrap();
    assert!((plant.a - models::pendulum().unwrap().a).amax() < 1e-15);
    assert!((ctrl.d - models::pendulum_controller().unwrap().d).amax() < 1e-15);
}

#[test]
fn help_exits_cleanly() {
    let (code, out, _) = call(&["--help"]);
    assert_eq!(code, 0);
    for cmd in ["realise", "simulate", "verify", "discretise"] {
        assert!(out.contains(cmd));
    }
}
