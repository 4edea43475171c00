use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance")
}

fn riemdyn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riemdyn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn sphere_geodesic_keeps_constant_speed() {
    let dir = tempfile::tempdir().unwrap();
    let out = riemdyn(dir.path(), &["simulate", "-c", &config("sphere_geodesic.json")]);
    assert!(out.status.success(), "{}", stderr(&out));
    for i in 0..2 {
        let text = std::fs::read_to_string(dir.path().join(format!("out/sphere_geodesic_{i}.csv"))).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x1,x2,v1,v2,speed,h");
        let speed = csv_column(&text, "speed");
        assert_eq!(speed.len(), 1001);
        assert!(speed.iter().all(|s| (s - speed[0]).abs() < 1e-8));
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/sphere_geodesic_report.json")).unwrap()).unwrap();
    assert_eq!(report["force_free"], true);
    assert!(report["max_speed_drift"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert!(riemdyn(dir.path(), &["simulate", "-c", &config("conformal_x1.json")]).status.success());
    }
    for file in ["out/conformal_x1_0.csv", "out/conformal_x1_1.csv", "out/conformal_x1_report.json"] {
        assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn conformal_force_conserves_h() {
    let dir = tempfile::tempdir().unwrap();
    let out = riemdyn(dir.path(), &["simulate", "-c", &config("conformal_x1.json")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/conformal_x1_report.json")).unwrap()).unwrap();
    assert!(report["max_h_drift"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["max_speed_drift"], Value::Null);
}

#[test]
fn hamiltonian_runs_write_cotangent_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = riemdyn(dir.path(), &["simulate", "-c", &config("hamilton_kinetic_polar.json")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/hamilton_polar.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x1,x2,p1,p2,H");
    let h = csv_column(&text, "H");
    assert!(h.iter().all(|v| (v - h[0]).abs() < 1e-9));
}

#[test]
fn dimension_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(config("sphere_geodesic.json")).unwrap().replace("[0.6, 0.8]", "[0.6, 0.8, 1.0]");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let out = riemdyn(dir.path(), &["simulate", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/initial/0/v"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(config("sphere_geodesic.json")).unwrap();
    for (from, to, pointer) in [
        ("\"schema\": 1", "\"schema\": 5", "/schema"),
        ("\"dt\": 0.001", "\"dt\": -1.0", "/integrator"),
        ("\"family\": \"geodesic\"", "\"family\": \"magnetic\"", "/system/family"),
        ("\"method\": \"rk4\"", "\"method\": \"euler\"", "/integrator/method"),
    ] {
        let cfg = write_config(dir.path(), "bad.json", &body.replace(from, to));
        let out = riemdyn(dir.path(), &["simulate", "-c", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{to}");
        assert!(stderr(&out).contains(pointer), "{to}: {}", stderr(&out));
    }
    let out = riemdyn(dir.path(), &["simulate", "-c", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
}

fn polar_run(dir: &Path, r0: f64) -> (Output, Value) {
    let body = format!(
        r#"{{
            "schema": 1,
            "chart": {{"name": "polar2d"}},
            "system": {{"kind": "newton", "family": "geodesic"}},
            "initial": [{{"x": [{r0}, 0.0], "v": [-1.0, 0.0]}}],
            "integrator": {{"method": "rk4", "dt": 0.01, "t_span": [0.0, 1.0]}},
            "outputs": {{"trajectory_path": "t.csv", "report_path": "r.json"}}
        }}"#
    );
    let cfg = write_config(dir, "polar.json", &body);
    let out = riemdyn(dir, &["simulate", "-c", &cfg]);
    let report = serde_json::from_str(&std::fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
    (out, report)
}

#[test]
fn integration_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // radial geodesic through the origin of polar coordinates
    let (out, report) = polar_run(dir.path(), 0.505);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert_eq!(report["completed"], false);
    assert_eq!(report["runs"][0]["status"], "left_chart");
    assert!(report["runs"][0]["t_final"].as_f64().unwrap() < 0.51);
    // a stage lands on r = 0 exactly
    let (out, report) = polar_run(dir.path(), 0.5);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert_eq!(report["runs"][0]["status"], "failed");
    assert!(report["runs"][0]["error"].as_str().unwrap().contains("singular"));
}

#[test]
fn verify_examples() {
    let dir = tempfile::tempdir().unwrap();
    for (suite, chart) in [("identities", "sphere"), ("theorem81", "euclidean2")] {
        let out = riemdyn(dir.path(), &["verify", "--suite", suite, "--chart", chart, "--seed", "7"]);
        assert!(out.status.success(), "{suite}: {}", stderr(&out));
        let report = json_stdout(&out);
        assert_eq!(report["passed"], true);
        assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    }
    let out = riemdyn(dir.path(), &["verify", "--suite", "nonsense", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let out = riemdyn(dir.path(), &["verify", "--suite", "identities", "--chart", "torus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn acceptance_configs_are_runnable() {
    let mut names: Vec<String> = std::fs::read_dir(configs())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("criterion_"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 10);
    let quick = ["identities", "conformal_flow", "projectors", "legendre", "cancellation", "chain_rules", "order"];
    let dir = tempfile::tempdir().unwrap();
    for name in names.iter().filter(|n| quick.iter().any(|q| n.ends_with(&format!("_{q}.json")))) {
        let out = riemdyn(dir.path(), &["verify", "-c", &config(name)]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        let written = std::fs::read(dir.path().join("out").join(name)).unwrap();
        assert_eq!(written, out.stdout, "{name}");
    }
}

#[test]
fn legendre_of_the_kinetic_lagrangian() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("legendre_kinetic.json");
    let out = riemdyn(dir.path(), &["legendre", "-c", &cfg, "--direction", "forward", "--state", "0.3,-0.2; 1,2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = json_stdout(&out);
    assert_eq!(r["p"], serde_json::json!([1.0, 2.0]));
    assert_eq!(r["matrix"], "A");
    assert!((r["det"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = riemdyn(dir.path(), &["legendre", "-c", &cfg, "--direction", "inverse", "--state", "0.3,-0.2; 1,2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = json_stdout(&out);
    let v: Vec<f64> = r["v"].as_array().unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
    assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
    assert_eq!(r["matrix"], "B");
}

#[test]
fn degenerate_lagrangian_is_reported_singular() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("legendre_degenerate.json");
    for direction in ["forward", "inverse"] {
        let out = riemdyn(dir.path(), &["legendre", "-c", &cfg, "--direction", direction, "--state", "0.3,-0.2;1,2"]);
        assert_eq!(out.status.code(), Some(4), "{direction}");
        assert!(stderr(&out).contains("singular"), "{}", stderr(&out));
    }
}

#[test]
fn malformed_states_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("legendre_kinetic.json");
    for state in ["1,2", "1,2;3", "1,x;3,4"] {
        let out = riemdyn(dir.path(), &["legendre", "-c", &cfg, "--direction", "forward", "--state", state]);
        assert_eq!(out.status.code(), Some(2), "{state}");
    }
}
