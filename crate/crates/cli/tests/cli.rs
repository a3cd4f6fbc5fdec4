use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sqforms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqforms"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config(
    dir: &TempDir,
    name: &str,
    config: &str,
    extra: &[&str],
) -> (Output, std::path::PathBuf) {
    let cfg = dir.path().join(format!("{name}.json"));
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join(name);
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (sqforms(&args), out)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn task<'a>(r: &'a Value, name: &str) -> &'a Value {
    &r["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["task"] == name)
        .unwrap()["result"]
}

const TOY: &str = r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.2, "n": 64},
    "tasks": ["spectrum", "classify"]}"#;

#[test]
fn constant_drive_is_unbroken() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_config(&dir, "toy", TOY, &["--backend", "fourier"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    assert_eq!(task(&r, "classify")["verdict"], "unbroken-Markovian");
    let checks = task(&r, "spectrum")["oracle_checks"].as_array().unwrap();
    assert!(!checks.is_empty() && checks.iter().all(|c| c["passed"] == true));
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("degree,index,gamma,e,pair_id,physical_flag"));
    assert_eq!(csv.lines().count(), 129);
    assert!(out.join("timings.json").exists());
}

#[test]
fn double_well_witten_index_is_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"model": {"name": "langevin_double_well_circle", "depth": 1, "epsilon": 0.2, "n": 64},
        "tasks": ["witten", "stationary"]}"#;
    let (o, out) = run_config(&dir, "dw", cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    assert_eq!(task(&r, "witten")["index"], 0);
    assert_eq!(task(&r, "witten")["zero_modes"], serde_json::json!([1, 1]));
    assert!(
        task(&r, "stationary")["max_relative_deviation_from_oracle"]
            .as_f64()
            .unwrap()
            < 1e-6
    );
}

#[test]
fn validation_failures_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            "empty",
            r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.2, "n": 64}, "tasks": []}"#,
        ),
        (
            "unsorted",
            r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.2, "n": 64},
            "tasks": ["sweep"], "sweep": {"epsilons": [0.1, 0.4]}}"#,
        ),
        (
            "fourier",
            r#"{"model": {"name": "langevin_double_well_circle", "depth": 1, "epsilon": 0.2, "n": 32},
            "tasks": ["spectrum"], "backend": "fourier"}"#,
        ),
        ("broken", "{not json"),
    ];
    for (name, cfg) in cases {
        let (o, _) = run_config(&dir, name, cfg, &[]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let (o, _) = run_config(
        &dir,
        "unknown",
        r#"{"model": {"name": "lorenz"}, "tasks": ["spectrum"]}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("constant_drive_circle") && err.contains("torus_shear_model"),
        "{err}"
    );
}

#[test]
fn capacity_overflow_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"model": {"name": "torus_shear_model", "ax": 1, "ay": 1, "epsilon": 0.2, "n": 64},
        "tasks": ["spectrum"]}"#;
    let (o, _) = run_config(&dir, "big", cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("block sizes"));
}

#[test]
fn reports_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"model": {"name": "tilted_langevin_circle", "depth": 1, "tilt": 3, "epsilon": 0.2, "n": 32},
        "tasks": ["spectrum", "classify", "witten", "morse", "simulate"],
        "simulation": {"dt": 0.01, "steps": 500, "n_paths": 200, "record_every": 5, "bins": 16}}"#;
    let (a, out_a) = run_config(&dir, "a", cfg, &["--seed", "4"]);
    let (b, out_b) = run_config(&dir, "b", cfg, &["--seed", "4"]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(b.status.code(), Some(0));
    for f in [
        "report.json",
        "spectrum.csv",
        "histogram.csv",
        "critical_points.csv",
    ] {
        assert_eq!(
            fs::read(out_a.join(f)).unwrap(),
            fs::read(out_b.join(f)).unwrap(),
            "{f}"
        );
    }
    let text = fs::read_to_string(out_a.join("report.json")).unwrap();
    assert!(text.contains("\"spectral_radius\": "));
    assert!(!text.contains("seconds"));
    let r = report(&out_a);
    assert_eq!(r["config"]["simulation"]["seed"], 4);
    assert_eq!(task(&r, "classify")["verdict"], "unbroken-Markovian");
}

#[test]
fn sweeps_report_condensation() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.4, "n": 32},
        "tasks": ["sweep"], "backend": "fourier", "sweep": {"epsilons": [0.4, 0.2, 0.1, 0.05]}}"#;
    let (o, out) = run_config(&dir, "cd", cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    let s = task(&r, "sweep");
    for row in s["rows"].as_array().unwrap() {
        let eps = row["epsilon"].as_f64().unwrap();
        assert!((row["ratio"].as_f64().unwrap() - eps / 2.0).abs() < 1e-8 * eps);
    }
    assert_eq!(s["ratios_strictly_decreasing"], true);
    assert_eq!(s["condensation"], "condensed");

    let cfg = r#"{"model": {"name": "langevin_double_well_circle", "depth": 1, "epsilon": 0.4, "n": 32},
        "tasks": ["sweep"], "sweep": {"epsilons": [0.4, 0.2, 0.1, 0.05]}}"#;
    let (o, out) = run_config(&dir, "dw", cfg, &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(task(&r, "sweep")["summary"], "no condensation");
    assert!(fs::read_to_string(out.join("sweep.csv"))
        .unwrap()
        .contains(",inf,"));
}

#[test]
fn morse_task_scans_instantons() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"model": {"name": "langevin_double_well_circle", "depth": 1, "epsilon": 0.2, "n": 64},
        "tasks": ["morse"], "morse": {"instanton_epsilons": [0.4, 0.2, 0.1]}}"#;
    let (o, out) = run_config(&dir, "m", cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    let m = task(&r, "morse");
    assert_eq!(m["poincare_hopf_sum"], 0);
    assert_eq!(m["points"].as_array().unwrap().len(), 4);
    assert_eq!(m["instanton"]["strictly_decreasing"], true);
}

#[test]
fn inline_models_and_path_dumps() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"model": {"inline": {"mesh": {"kind": "torus", "nx": 6, "ny": 6, "lx": 6.283185307179586,
        "ly": 6.283185307179586}, "epsilon": 0.5}}, "tasks": ["witten"]}"#;
    let (o, out) = run_config(&dir, "inline", cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        task(&report(&out), "witten")["zero_modes"],
        serde_json::json!([1, 2, 1])
    );

    let cfg = r#"{"model": {"name": "torus_shear_model", "ax": 1, "ay": 0.5, "epsilon": 0.3, "n": 8},
        "tasks": ["simulate"], "simulation": {"dt": 0.01, "steps": 100, "n_paths": 150, "record_every": 10,
        "dump_paths": true}}"#;
    let (o, out) = run_config(&dir, "dump", cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let bytes = fs::read(out.join("paths.bin")).unwrap();
    assert_eq!(bytes.len(), 150 * 11 * 2 * 8);
    let side: Value =
        serde_json::from_str(&fs::read_to_string(out.join("paths.json")).unwrap()).unwrap();
    assert_eq!(side["shape"], serde_json::json!([150, 11, 2]));
}

#[test]
fn lists_models() {
    let o = sqforms(&["models"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("langevin_double_well_circle: depth, epsilon, n"));
}
