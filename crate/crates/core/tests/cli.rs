//! End-to-end checks of the `locnpg` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_locnpg"));
    c.env_remove("LOCNPG_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: Option<&Path>, extra: &[&str]) -> Output {
    let mut c = bin();
    c.arg(cmd).arg("--config").arg(config);
    if let Some(o) = out {
        c.arg("--out").arg(o);
    }
    c.args(extra).output().unwrap()
}

const SAMPLED: &str = r#"{"graph": {"type": "path", "agents": 3},
    "policy": {"alphas": [5.0, 0.005, 0.005]},
    "npg": {"mode": "sampled", "radius": 2, "iterations": 6, "spgd_steps": 400, "w_radius": 0.1, "seed": 3}}"#;

#[test]
fn zero_iterations_emit_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"graph": {"type": "path", "agents": 2}, "npg": {"iterations": 0}}"#);
    let out = dir.path().join("o");
    let o = run("train", &cfg, Some(&out), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("train.csv")).unwrap();
    assert_eq!(csv, "iter,V_mu,gap,eta,mean_w_norm,eps_stat_proxy\n");
    assert!(out.join("summary.json").exists());
}

#[test]
fn train_prints_csv_without_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"graph": {"type": "path", "agents": 2}, "npg": {"iterations": 3}}"#);
    let o = run("train", &cfg, None, &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 6);
    assert_eq!(fields[0], "0");
    // Seventeen significant digits.
    assert_eq!(fields[1].split('e').next().unwrap().len(), 18);
}

#[test]
fn empty_sweep_emits_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"graph": {"type": "path", "agents": 2}, "sweep": {"radii": []}}"#);
    let o = run("sweep-radius", &cfg, None, &[]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "r,seed,min_gap,loc_bound\n");
}

#[test]
fn sweep_rows_per_radius_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"graph": {"type": "path", "agents": 3}, "policy": {"alphas": [5.0, 0.005, 0.005]},
            "npg": {"iterations": 20, "w_radius": 0.1}, "sweep": {"radii": [0, 2], "seeds": [1, 2]}}"#,
    );
    let out = dir.path().join("o");
    assert!(run("sweep-radius", &cfg, Some(&out), &[]).status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("0,1,") && rows[3].starts_with("2,2,"));
}

#[test]
fn thread_env_var_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SAMPLED);
    let a = run("train", &cfg, None, &["--threads", "2"]).stdout;
    let b = bin()
        .env("LOCNPG_THREADS", "5")
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap()
        .stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SAMPLED);
    let a = run("train", &cfg, None, &["--seed", "3"]).stdout;
    let b = run("train", &cfg, None, &[]).stdout;
    let c = run("train", &cfg, None, &["--seed", "4"]).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn malformed_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"graph": {"type": "path"}}"#);
    assert_eq!(run("train", &cfg, None, &[]).status.code(), Some(4));
    let cfg = write_config(dir.path(), "d.json", "not json");
    assert_eq!(run("certify", &cfg, None, &[]).status.code(), Some(4));
    let missing = dir.path().join("missing.json");
    assert_eq!(run("train", &missing, None, &[]).status.code(), Some(4));
    assert_eq!(bin().arg("train").output().unwrap().status.code(), Some(4));
}

#[test]
fn failed_certification_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"graph": {"type": "path", "agents": 3}, "env": {"type": "influence", "lambda": 2.5}}"#,
    );
    let o = run("certify", &cfg, None, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("\"ok\": false"));
}

#[test]
fn oversized_exact_run_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"graph": {"type": "path", "agents": 12}, "npg": {"iterations": 1}}"#);
    assert_eq!(run("train", &cfg, None, &[]).status.code(), Some(3));
    assert_eq!(run("bias-gap", &cfg, None, &[]).status.code(), Some(3));
}

#[test]
fn certify_reports_rho() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"graph": {"type": "path", "agents": 3}}"#);
    let out = dir.path().join("o");
    let o = run("certify", &cfg, Some(&out), &[]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("certificate.json")).unwrap()).unwrap();
    assert!((v["rho"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert_eq!(v["ok"], true);
}

#[test]
fn audit_writes_episode_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"graph": {"type": "path", "agents": 2}, "audit": {"episodes": 500, "advantage_episodes": 500}}"#,
    );
    let out = dir.path().join("o");
    let o = run("audit-sampler", &cfg, Some(&out), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sampler.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("episode,accept_step,branch,A_hat_0,A_hat_1"));
    assert_eq!(lines.count(), 500);
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(rep["episodes"], 500);
}

#[test]
fn bias_gap_rows_for_every_radius() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"graph": {"type": "path", "agents": 3}}"#);
    let o = run("bias-gap", &cfg, None, &[]);
    assert!(o.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[2]["gap"].as_f64().unwrap().abs() <= 1e-9);
}
