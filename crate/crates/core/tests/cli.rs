use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualtraj"))
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn solve_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"points": 40}"#);
    let out = dir.path().join("out");
    let status = bin()
        .args(["solve", "--mode", "single", "--iters", "20", "--seed", "3"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in [
        "trajectory.csv",
        "metrics.json",
        "iterations.csv",
        "error.svg",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["iterations"], 20);
    assert_eq!(metrics["mode"], "single");
}

#[test]
fn no_feasible_iterate_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"points": 30, "solver": {"feasibility_tol": 0.0}}"#,
    );
    let status = bin()
        .args(["solve", "--iters", "3", "--phi", "1.0"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bad_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for json in [
        r#"{"unknown": 1}"#,
        r#"{"solver": {"eta_theta": -1.0}}"#,
        r#"{"p_norm": "inf"}"#,
        "not json",
    ] {
        let cfg = write_config(dir.path(), json);
        let out = bin()
            .arg("solve")
            .arg("--config")
            .arg(&cfg)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(1), "{json}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
    let missing = bin()
        .args(["experiment", "--config", "/nonexistent/cfg.json"])
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(1));
}

#[test]
fn path_and_validate_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.csv");
    let status = bin().arg("path").arg("--out").arg(&file).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&file).unwrap().lines().count(), 501);

    let out = bin().args(["validate", "--seed", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn experiment_with_seed_draws_angles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"points": 30, "phi_inits": [0.0, 1.0]}"#);
    let out = dir.path().join("out");
    let status = bin()
        .args(["experiment", "--iters", "5", "--seed", "9"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let agg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aggregate.json")).unwrap())
            .unwrap();
    let phis: Vec<f64> = agg["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|r| r["phi0"].as_f64())
        .collect();
    assert_eq!(phis.len(), 4);
    assert!(phis.iter().all(|p| *p != 0.0 && *p != 1.0));
}
