use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pcaddreach");

fn config(calibration: usize, delta: f64, tau: f64) -> String {
    format!(
        r#"{{
    "system": {{ "builtin": "linear2d" }},
    "plan": {{ "horizon": 3 }},
    "train": {{ "trajectories": 100, "data_seed": 1, "seed": 2, "hidden": [3], "epochs": 20 }},
    "conformal": {{ "calibration_trajectories": {calibration}, "data_seed": 3, "delta": {delta}, "tau": {tau} }},
    "validate": {{ "trials": 100, "seed": 4 }}
}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn pcaddreach(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("PCADDREACH_THREADS", "2")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", &config(100, 0.8, 0.0));
    let out = tmp.path().join("out");
    let o = pcaddreach(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("validate: coverage"), "{stdout}");
    for f in ["confident_flowpipe.json", "coverage.json", "report.json", "timings.json", "models/segment_00001.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let bounds = fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert_eq!(bounds.lines().count(), 1 + 3 * 2);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["bounds_rows"], 6);

    let o = pcaddreach(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("comparison.json").exists());
}

#[test]
fn infeasible_calibration_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", &config(10, 0.95, 0.1));
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    for phase in ["simulate", "train"] {
        let o = pcaddreach(&[phase, "--config", &cfg, "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = pcaddreach(&["calibrate", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(4));
    let e = stderr(&o);
    assert!(e.contains("ℓ*=13 > L=10"), "{e}");
    assert!(e.contains("no calibration size suffices"), "{e}");
}

#[test]
fn unknown_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config(100, 0.8, 0.0).replace(r#""seed": 4"#, r#""seed": 4, "trails": 5"#);
    let cfg = write(tmp.path(), "c.json", &text);
    let o = pcaddreach(&["check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("validate.trails"), "{}", stderr(&o));
    let good = write(tmp.path(), "g.json", &config(100, 0.8, 0.0));
    assert!(pcaddreach(&["check", "--config", &good]).status.success());
}

#[test]
fn missing_artifact_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", &config(100, 0.8, 0.0));
    let out = tmp.path().join("empty");
    let o = pcaddreach(&["inflate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("`reach`"), "{}", stderr(&o));
}

#[test]
fn unknown_phase_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", &config(100, 0.8, 0.0));
    let o = pcaddreach(&["run", "--config", &cfg, "--phase", "deploy"]);
    assert_eq!(o.status.code(), Some(2));
}
