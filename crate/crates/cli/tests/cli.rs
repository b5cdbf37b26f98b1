use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermoscheme"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn defaults_run_the_doubling_smoke_test() {
    let v = json_stdout(&["pressure"]);
    assert!((v["value"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(v["estimators_agree"], Value::Bool(true));
    assert_eq!(v["meta"]["truncation"]["N"], 200);
}

#[test]
fn shifted_farey_pressure_vanishes() {
    let v = json_stdout(&["pressure", "--scheme", "farey_induced", "--potential", "geometric:0", "--shift-s", "0.6931471805"]);
    assert!(v["value"].as_f64().unwrap().abs() <= 1e-6);
}

#[test]
fn equilibrium_outcomes() {
    let v = json_stdout(&["equilibrium", "--scheme", "farey_induced", "--potential", "geometric:0", "--N", "80", "--depth", "2"]);
    let s = &v["summary"];
    assert_eq!(s["outcome"], "liftable");
    assert!((s["Q"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((s["h_base"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-6);

    let v = json_stdout(&["equilibrium", "--scheme", "farey_induced", "--potential", "geometric:1", "--N", "1000", "--depth", "1"]);
    assert_eq!(v["summary"]["outcome"], "nonliftable");
    assert_eq!(v["summary"]["Q"], "inf");

    let v = json_stdout(&["equilibrium", "--scheme", "doubling", "--potential", "geometric:1", "--observable", "expr:x"]);
    let s = &v["summary"];
    assert!(s["s"].as_f64().unwrap().abs() < 1e-12);
    assert!((s["integral_phi"].as_f64().unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
    let lifted = &v["report"]["lift"]["integrals"][0]["value"];
    assert!((lifted.as_f64().unwrap() - 0.5).abs() < 1e-10);
}

#[test]
fn artifacts_carry_version_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = run(&["sweep", "--scheme", "doubling", "--t-grid", "-1:2:0.25", "--out", out]);
    assert!(r.status.success());
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with(&format!("# thermoscheme {}", env!("CARGO_PKG_VERSION"))));
    assert!(lines.next().unwrap().contains("N=2"));
    assert_eq!(lines.next().unwrap(), "t,s,residual,N,Q_value_or_inf,liftable_flag");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 13);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let (t, s): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        assert!((s - (1.0 - t) * std::f64::consts::LN_2).abs() < 1e-10);
        assert_eq!(f[5], "1");
    }
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sidecar["meta"]["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn masses_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(run(&["equilibrium", "--scheme", "doubling", "--depth", "3", "--out", out]).status.success());
    let csv = fs::read_to_string(dir.path().join("masses.csv")).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "word,mass,phi_n,ratio");
    assert_eq!(body.len(), 1 + 2 + 4 + 8);
    let depth3: Vec<Vec<f64>> = body[7..]
        .iter()
        .map(|l| l.split(',').skip(1).map(|f| f.parse().unwrap()).collect())
        .collect();
    for row in depth3 {
        assert!((row[0] - 0.125).abs() < 1e-12 && (row[2] - 1.0).abs() < 1e-9, "{row:?}");
    }
}

#[test]
fn check_command_reports_verdicts() {
    let v = json_stdout(&["check", "--scheme", "doubling"]);
    assert_eq!(v["verdict"], "pass");
    let v = json_stdout(&["check", "--scheme", "farey_induced", "--potential", "geometric:1", "--N", "1000", "--conditions", "P4"]);
    assert_ne!(v["reports"][0]["verdict"], "pass");
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["pressure", "--scheme", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["pressure", "--potential", "geometric:x"]).status.code(), Some(2));
    assert_eq!(run(&["pressure", "--N", "0"]).status.code(), Some(2));
    let missing = run(&["pressure", "--config", "/nonexistent/run.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("\"error\":\"io\""));
    let r = run(&["check", "--scheme", "gauss", "--conditions", "P9"]);
    assert_eq!(r.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("\"error\":\"config\""), "{stderr}");
}

#[test]
fn numerical_failures_exit_three() {
    // The pressure of −log x is positive everywhere on the search range.
    let r = run(&["equilibrium", "--scheme", "gauss", "--potential", "expr:100*log(x)+1e9", "--N", "20"]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("\"error\":\"numerical\""));
}

#[test]
fn budget_overrun_exits_four() {
    // Even a one-symbol alphabet needs n_max periodic words.
    let r = run(&["pressure", "--scheme", "gauss", "--n-max", "6", "--word-budget", "3"]);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("\"error\":\"budget\""));
}

#[test]
fn config_file_overrides_flags_and_cites_lines() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "run.toml", "scheme = \"farey_induced\"\npotential = \"geometric:0\"\nN = 60\n");
    let v = json_stdout(&["pressure", "--scheme", "gauss", "--config", &good]);
    assert_eq!(v["meta"]["scheme"], "farey_induced");
    assert_eq!(v["meta"]["truncation"]["N"], 60);

    let bad = write(dir.path(), "bad.toml", "N = 60\n# comment\npotential = \"wobble:1\"\n");
    let r = run(&["pressure", "--config", &bad]);
    assert_eq!(r.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("line 3") && stderr.contains("potential"), "{stderr}");
}

#[test]
fn custom_scheme_file() {
    let dir = tempfile::tempdir().unwrap();
    let src = r#"
grammar = "1"
base_interval = [0.0, 1.0]
inducing_range = [0.0, 1.0]

[[branches]]
domain = [0.0, 0.5]
tau = 1
map = "2*x"

[[branches]]
domain = [0.5, 1.0]
tau = 1
map = "2*x - 1"
"#;
    let path = write(dir.path(), "two.toml", src);
    let v = json_stdout(&["pressure", "--scheme-file", &path, "--potential", "geometric:0"]);
    assert!((v["value"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-10);

    let broken = write(dir.path(), "broken.toml", &src.replace("tau = 1\nmap = \"2*x\"", "tau = 1\nmap = \"2*\""));
    let r = run(&["pressure", "--scheme-file", &broken]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 9"), "{}", String::from_utf8_lossy(&r.stderr));
}
