use std::path::{Path, PathBuf};
use std::process::Command;

use levy_euler::config::{parse_config, parse_config_str, ExperimentConfig};
use serde_json::{json, Value};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn small(name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> (tempfile::TempDir, PathBuf) {
    let mut config = parse_config(&config_path(name)).unwrap();
    edit(&mut config);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
    (dir, path)
}

fn levy_euler(args: &[&str], config: &Path, out: &Path, envs: &[(&str, &str)]) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_levy-euler"));
    cmd.args(&args[..1]).arg("--config").arg(config).arg("--out").arg(out).args(&args[1..]);
    cmd.env_remove("LEVY_EULER_SEED").env_remove("LEVY_EULER_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap().status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn sample_stable_cauchy_quartiles() {
    let (dir, path) = small("cauchy_samples.json", |_| {});
    let out = dir.path().join("out");
    assert_eq!(levy_euler(&["sample-stable"], &path, &out, &[]), 0);
    let m = read_json(&out.join("moments.json"));
    let q = &m["coordinates"][0]["quartiles_unit_scale"];
    assert!((q[0].as_f64().unwrap() + 1.0).abs() < 0.03, "{q}");
    assert!((q[1].as_f64().unwrap() - 1.0).abs() < 0.03, "{q}");
    let scale = m["scale"].as_f64().unwrap();
    assert!((scale - std::f64::consts::PI).abs() < 1e-9);
    assert_eq!(csv_rows(&out.join("samples.csv")).len(), 100_001);
}

#[test]
fn constant_coefficient_rate_is_exact() {
    let (dir, path) = small("constant_exact.json", |c| {
        c.mc.n_paths = 20_000;
        c.grids.n = vec![1, 2, 4];
        c.grids.reference_n = Some(128);
    });
    let out = dir.path().join("out");
    assert_eq!(levy_euler(&["rate"], &path, &out, &[]), 0);
    let points = csv_rows(&out.join("points.csv"));
    assert_eq!(points[0], ["delta", "estimate", "stderr", "n_paths", "excluded"]);
    for row in &points[1..] {
        let e: f64 = row[1].parse().unwrap();
        let se: f64 = row[2].parse().unwrap();
        assert!(e.abs() <= 3.0 * se, "{row:?}");
        // 17 significant digits
        assert_eq!(row[1].split('e').next().unwrap().trim_start_matches('-').len(), 18);
    }
    let report = csv_rows(&out.join("report.csv"));
    assert_eq!(&report[0][..6], ["fitted_slope", "ci_lo", "ci_hi", "theory_exponent", "theory_label", "pass"]);
    assert_eq!(report[1][5], "true");
}

#[test]
fn meta_round_trips_with_overrides() {
    let (dir, path) = small("holder_rate.json", |c| {
        c.mc.n_paths = 2_000;
        c.grids.n = vec![2, 4, 8];
        c.grids.reference_n = None;
    });
    let out = dir.path().join("out");
    // The exit status does not matter here: meta.json is written either way.
    levy_euler(&["rate", "--seed", "99"], &path, &out, &[("LEVY_EULER_WORKERS", "3")]);
    let meta = read_json(&out.join("meta.json"));
    assert_eq!(meta["seed"], 99);
    let echoed = parse_config(&out.join("meta.json")).unwrap();
    assert_eq!(echoed.mc.master_seed, 99);
    assert_eq!(echoed.mc.workers, 3);
    assert_eq!(echoed.grids.reference_n, Some(128));
    let again = parse_config_str(&serde_json::to_string(&json!({ "config": echoed })).unwrap()).unwrap();
    assert_eq!(echoed, again);

    // Re-running from meta.json reproduces the points exactly.
    let out2 = dir.path().join("out2");
    levy_euler(&["rate", "--workers", "1"], &out.join("meta.json"), &out2, &[]);
    assert_eq!(
        std::fs::read(out.join("points.csv")).unwrap(),
        std::fs::read(out2.join("points.csv")).unwrap()
    );
}

#[test]
fn seed_from_environment() {
    let (dir, path) = small("constant_exact.json", |c| {
        c.mc.n_paths = 1_000;
        c.grids.reference_n = Some(16);
    });
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    levy_euler(&["rate"], &path, &a, &[("LEVY_EULER_SEED", "5")]);
    levy_euler(&["rate", "--seed", "5"], &path, &b, &[]);
    assert_eq!(read_json(&a.join("meta.json"))["seed"], 5);
    assert_eq!(
        std::fs::read(a.join("points.csv")).unwrap(),
        std::fs::read(b.join("points.csv")).unwrap()
    );
}

#[test]
fn violations_are_all_reported() {
    let mut raw: Value = serde_json::from_str(&std::fs::read_to_string(config_path("holder_rate.json")).unwrap()).unwrap();
    raw["model"]["alpha"] = json!(0.5);
    raw["z"]["mu"] = json!(2.0);
    raw["mc"]["n_paths"] = json!(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, raw.to_string()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(levy_euler(&["rate"], &path, &out, &[]), 2);
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["error"], "config");
    let list: Vec<String> = err["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(list.iter().any(|v| v.contains("a must be zero for α ∈ (0,1)")), "{list:?}");
    assert!(list.iter().any(|v| v.contains("0 < β ≤ μ < α + β")), "{list:?}");
    assert!(list.iter().any(|v| v.contains("at least 2")), "{list:?}");
}

#[test]
fn failed_check_exits_with_one() {
    let (dir, path) = small("generator_check.json", |c| {
        c.generator.n_paths = Some(2_000);
        c.generator.max_relative_error = 0.0;
    });
    let out = dir.path().join("out");
    assert_eq!(levy_euler(&["check-generator"], &path, &out, &[]), 1);
    let report = csv_rows(&out.join("report.csv"));
    assert_eq!(report[0].last().unwrap(), "pass");
    assert_eq!(report[1].last().unwrap(), "false");
}

#[test]
fn one_step_writes_panel() {
    let (dir, path) = small("holder_rate.json", |c| {
        c.one_step.n_paths = Some(20_000);
    });
    let out = dir.path().join("out");
    assert_eq!(levy_euler(&["one-step"], &path, &out, &[]), 0);
    assert_eq!(csv_rows(&out.join("points.csv")).len(), 6);
    assert_eq!(csv_rows(&out.join("panel.csv")).len(), 21);
    assert_eq!(csv_rows(&out.join("report.csv"))[1][5], "true");
}

#[test]
fn missing_config_writes_error_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(levy_euler(&["rate"], &dir.path().join("nope.json"), &out, &[]), 2);
    assert_eq!(read_json(&out.join("error.json"))["error"], "io");
}
