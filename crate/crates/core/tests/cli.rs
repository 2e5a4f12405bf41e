use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fharmonic"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("FHARMONIC_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn solve_identity_writes_trajectory() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["solve", "--c", "1", "--r-max", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(text.starts_with("r,alpha,alpha_prime,theta,g_theta,residual\n"));
    let rows = rows(&dir.path().join("trajectory.csv"));
    assert!(rows.len() > 10);
    for row in &rows {
        assert_eq!(row.len(), 6);
        let (r, a) = (num(&row[0]), num(&row[1]));
        assert!((a - r).abs() <= 1e-9 * r.max(1.0), "{r} {a}");
    }
    assert!((num(&rows.last().unwrap()[0]) - 5.0).abs() < 1e-12);
}

#[test]
fn blow_up_exits_with_solver_code() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["solve", "--c", "1.1", "--r-max", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("BlowUp"));
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn bad_profile_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["solve", "--profile", "q:4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("profile"), "{}", stderr(&out));
    let out = run(dir.path(), &["solve", "--warp-f", "sphere"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["solve", "--n", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_rows_follow_the_grid() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &["sweep", "--c-min", "0.5", "--c-max", "1.5", "--count", "5", "--r-max", "20"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(text.starts_with("c,alpha_at_rmax,alpha_prime_at_rmax,termination,class\n"));
    let rows = rows(&dir.path().join("sweep.csv"));
    let cs: Vec<f64> = rows.iter().map(|r| num(&r[0])).collect();
    assert_eq!(cs, vec![0.5, 0.75, 1.0, 1.25, 1.5]);
    let classes: Vec<&str> = rows.iter().map(|r| r[4].as_str()).collect();
    assert_eq!(
        classes,
        ["Bounded", "Bounded", "Identity", "AboveIdentity", "AboveIdentity"]
    );
    assert_eq!(rows[3][3], "BlowUp");
}

#[test]
fn single_point_sweep_uses_c_min() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &["sweep", "--warp-f", "euclidean", "--warp-g", "euclidean", "--c-min", "0.7", "--c-max", "3", "--count", "1", "--r-max", "4"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(num(&rows[0][0]), 0.7);
    assert!((num(&rows[0][1]) - 0.7 * 4.0).abs() < 1e-9);
    assert_eq!(rows[0][4], "");
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "n": 2, "warp_g": "euclidean", "c": 0.5, "r_max": 3.0}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["solve", "--config", cfg.to_str().unwrap(), "--c", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = rows(&dir.path().join("trajectory.csv"));
    let last = rows.last().unwrap();
    assert!((num(&last[0]) - 3.0).abs() < 1e-12);
    // Harmonic map from the hyperbolic plane to the flat plane.
    let exact = 2.0 * 2.0 * 1.5f64.tanh();
    assert!((num(&last[1]) - exact).abs() < 1e-8, "{} vs {exact}", last[1]);
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"n": 2, "slope": 0.5}"#).unwrap();
    let out = run(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("slope"), "{}", stderr(&out));

    fs::write(&cfg, r#"{"schema_version": 2}"#).unwrap();
    let out = run(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shoot_reports_the_slope() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &["shoot", "--warp-g", "euclidean", "--r0", "2", "--target", "1", "--match-tol", "1e-12"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("shoot.json")).unwrap()).unwrap();
    let c = json["c_star"].as_f64().unwrap();
    assert!((c - 1.0 / (2.0 * 1f64.tanh())).abs() < 1e-9);
    assert_eq!(json["uniqueness_guaranteed"], Value::Bool(true));
    assert!(dir.path().join("shoot.csv").exists());

    let out = run(dir.path(), &["shoot", "--r0", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn minimize_matches_the_forward_solution() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &["minimize", "--warp-g", "euclidean", "--c", "1", "--r-a", "0.5", "--r-b", "2", "--points", "128"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = rows(&dir.path().join("minimize.csv"));
    assert_eq!(rows.len(), 130);
    for row in &rows {
        let (r, a) = (num(&row[0]), num(&row[1]));
        assert!((a - 2.0 * (r / 2.0).tanh()).abs() < 1e-3, "r = {r}: {a}");
    }
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("minimize.json")).unwrap())
            .unwrap();
    assert_eq!(json["converged"], Value::Bool(true));
}

#[test]
fn verify_single_checker() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["verify", "--checkers", "T2_15"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["theorem_id"], "T2_15");
    assert_eq!(reports[0]["verdict"], "Consistent");
}

#[test]
fn loose_match_tolerance_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["verify", "--checkers", "T2_15", "--match-tol", "1e3"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("inconclusive"), "{}", stderr(&out));
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(json["reports"][0]["verdict"], "Inconclusive");

    let out = run(dir.path(), &["verify", "--checkers", "T9_99"]);
    assert_eq!(out.status.code(), Some(1));
}
