//! A JSON project for a user-supplied plant and controller, driven through
//! the command-line entry point in-process.

use obsmpc::cli;
use obsmpc::config::{builtin_project, ProjectConfig};

const PROJECT: &str = r#"{
  "plant": {
    "kind": "continuous",
    "a": [[0.0, 1.0], [0.0, -0.5]],
    "b": [[0.0], [1.0]],
    "c": [[1.0, 0.0]],
    "d": [[0.0]],
    "ts": 0.1,
    "method": "zoh"
  },
  "controller": {
    "kind": "discrete",
    "a": [[0.5]],
    "b": [[1.0]],
    "c": [[-0.4]],
    "d": [[-0.8]],
    "ts": 0.1
  },
  "pipeline": { "form": "predictor" },
  "mpc": { "horizon": 10, "u_bounds": [{ "lo": -0.5, "hi": 0.5 }] },
  "scenario": { "duration": 5.0, "x0": [1.0, 0.0] }
}"#;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(
        std::iter::once("obsmpc").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

pub fn run_example() -> obsmpc::Result<()> {
    let cfg = ProjectConfig::from_json(PROJECT)?;
    let dir = std::env::temp_dir().join(format!("obsmpc-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("project.json");
    std::fs::write(&path, cfg.to_json()?)?;
    let p = path.to_string_lossy().into_owned();

    let (code, out, _) = call(&["verify", "--config", &p]);
    println!("verify → exit {code}\n{}", out.trim_end());

    let csv = dir.join("trace.csv");
    let (code, out, err) = call(&[
        "simulate",
        "--config",
        &p,
        "--scenario",
        "custom",
        "--out",
        &csv.to_string_lossy(),
    ]);
    println!("simulate → exit {code} {}", err.trim_end());
    let summary: serde_json::Value = serde_json::from_str(&out)?;
    println!(
        "max input violation {}",
        summary["summary"]["max_input_violation"]
    );
    let header = std::fs::read_to_string(&csv)?
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    println!("CSV columns: {header}");

    let (code, _, err) = call(&["simulate", "--config", &p, "--scenario", "no-such-case"]);
    println!("unknown scenario → exit {code}: {}", err.trim_end());
    let (code, _, err) = call(&["realise", "--config", "/nonexistent/project.json"]);
    println!("missing config → exit {code}: {}", err.trim_end());

    // Built-in projects serialise to the same schema.
    let sat = builtin_project("satellite")?;
    println!("built-in satellite project:\n{}", sat.to_json()?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> obsmpc::Result<()> {
    run_example()
}
