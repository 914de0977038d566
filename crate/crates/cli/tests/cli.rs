use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wwb-adapt"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn wwb-adapt")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(dir: &Path, controller: &str) -> String {
    let path = dir.join("scenario.json");
    let text = format!(
        r#"{{
  "array": {{"kind": "ula", "elements": 12, "spacing": 3.141592653589793}},
  "snr_db": -5.0,
  "prior": {{"kind": "uniform", "center": [0.0], "widths": [1.0]}},
  "steps": 6,
  "particles": 300,
  "controller": {controller},
  "seed": 7
}}"#
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn wwb_argmin_places_grating_lobe_at_prior_edge() {
    let o = run(&["wwb", "--model", "rp", "--prior", "uniform", "--dv", "1.0", "--snr-db", "0", "--g-grid", "0.1:0.05:6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("g,cost,h1,h2,argmin"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 119);
    let best: Vec<&Vec<f64>> = rows.iter().filter(|r| r[4] == 1.0).collect();
    assert_eq!(best.len(), 1);
    let g = best[0][0];
    assert!((g - 2.0).abs() <= 0.3, "argmin g = {g}");
    assert!(rows.iter().all(|r| r[1] >= best[0][1]));
}

#[test]
fn wwb_with_out_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let o = run(&[
        "wwb", "--model", "kp", "--variance", "0.05", "--snr-db", "-3", "--g-grid", "0.5:0.5:3",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("argmin_g="));
    let m = manifest(&dir.path().join("curve.csv.manifest.json"));
    assert_eq!(m["subcommand"], "wwb");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 1);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 7);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), r#"{"kind": "linear", "g0": 1.0, "slope": 0.5}"#);
    let mut hashes = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let o = run(&["simulate", "--config", &cfg, "--trials", "10", "--seed", "7", "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let m = manifest(&out.join("manifest.json"));
        let h: Vec<String> = m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["sha256"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(h.len(), 4);
        hashes.push(h);
    }
    assert_eq!(hashes[0], hashes[1]);

    let mse = fs::read_to_string(dir.path().join("a/mse.csv")).unwrap();
    assert_eq!(mse.lines().next(), Some("step,policy,mse,trials"));
    assert_eq!(mse.lines().count(), 7);
}

#[test]
fn lut_controller_decides_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let lut = dir.path().join("rp.lut");
    let o = run(&[
        "lut", "--model", "rp", "--var-min", "1e-6", "--var-max", "0.1", "--var-points", "4",
        "--snr-db-grid", "-6:1:-4", "--coarse-points", "16", "--out", lut.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("rp.lut.json").exists());

    let cfg = scenario(dir.path(), r#"{"kind": "fixed", "g": 1.0}"#);
    let out = dir.path().join("run");
    let o = run(&[
        "simulate", "--config", &cfg, "--trials", "20", "--controller", "lut:rp.lut",
        "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out.join("manifest.json"));
    let t = &m["timing"][0];
    assert_eq!(t["policy"], "lut");
    let max = t["max_decision_seconds"].as_f64().unwrap();
    assert!(max < 1e-3, "slowest decision {max} s");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn failures_map_to_exit_codes() {
    let o = run(&["wwb", "--model", "rp", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let line = stderr(&o);
    assert!(line.starts_with("error kind=config code=2 message="), "{line}");
    assert_eq!(line.trim_end().lines().count(), 1);

    let o = run(&["simulate", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("error kind=io code=4"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.lut");
    fs::write(&bad, b"WWBLUT\0\0garbage").unwrap();
    fs::write(dir.path().join("bad.lut.json"), "{}").unwrap();
    let cfg = scenario(dir.path(), r#"{"kind": "fixed", "g": 1.0}"#);
    let o = run(&["simulate", "--config", &cfg, "--trials", "2", "--controller", "lut:bad.lut", "--out-dir", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(&["--help"]);
    assert!(o.status.success());
}
