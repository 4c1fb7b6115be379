//! End-to-end CLI tests: exit codes, config strictness, output formats, and
//! the determinism criterion (byte-identical CSV across reruns).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_jacobi-lab")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should run")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

const ODE_CONFIG: &str = r#"{
  "schema": 1,
  "domain": "compact_alcove",
  "params": {"p": 6.0, "q": 5.0},
  "x0": [-0.5, 0.1, 0.6],
  "t_end": 0.5,
  "n_out": 20,
  "track_lyapunov": true,
  "track_discriminant": true
}"#;

#[test]
fn zeros_subcommand_prints_ordered_zeros() {
    let out = run(&["zeros", "--n", "5", "--alpha", "5", "--beta", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text
        .lines()
        .map(|l| l.trim().parse::<f64>().unwrap())
        .collect();
    assert_eq!(values.len(), 5);
    assert!(values.windows(2).all(|w| w[0] < w[1]));
    // symmetric parameters: antisymmetric zeros
    assert!((values[0] + values[4]).abs() < 1e-12);
    assert!(values[2].abs() < 1e-12);
}

#[test]
fn missing_config_is_a_config_error() {
    let out = run(&["ode-run", "--config", "/nonexistent/missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("config error"), "{err}");
}

#[test]
fn unknown_config_keys_are_hard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        &ODE_CONFIG.replace("\"n_out\": 20,", "\"n_out\": 20, \"typo_key\": 1,"),
    );
    let out = run(&[
        "ode-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("typo_key"), "{err}");
}

#[test]
fn domain_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    // noncompact run long enough to trip the growth guard
    let cfg = write_config(
        tmp.path(),
        "grow.json",
        r#"{
  "schema": 1,
  "domain": "noncompact_chamber",
  "params": {"p": 3.0, "q": 5.0},
  "x0": [1.5, 2.5],
  "t_end": 20.0,
  "n_out": 5
}"#,
    );
    let out = run(&[
        "ode-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{:?}", out);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("growth guard"), "{err}");
}

#[test]
fn dry_run_validates_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ode.json", ODE_CONFIG);
    let outdir = tmp.path().join("out");
    let out = run(&[
        "ode-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(out.status.success());
    assert!(!outdir.join("trajectory.csv").exists());
}

#[test]
fn overwrite_requires_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ode.json", ODE_CONFIG);
    let outdir = tmp.path().join("out");
    let args = [
        "ode-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ];
    assert!(run(&args).status.success());
    let again = run(&args);
    assert_eq!(again.status.code(), Some(2));
    let forced = run(&[
        "ode-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
        "--force",
    ]);
    assert!(forced.status.success());
}

#[test]
fn trajectory_floats_reparse_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ode.json", ODE_CONFIG);
    let outdir = tmp.path().join("out");
    assert!(run(&[
        "ode-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ])
    .status
    .success());
    let text = String::from_utf8(read(&outdir, "trajectory.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, "t,x_1,x_2,x_3");
    for line in lines {
        for field in line.split(',') {
            // 17 significant digits: parsing and reformatting is lossless
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), field);
        }
    }
}

/// Criterion 10: frozen experiments are byte-identical across reruns, and
/// stochastic experiments are byte-identical for a fixed seed.
#[test]
fn criterion_10_determinism() {
    let outcome = (|| -> Result<(), String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let limit_cfg = r#"{
  "experiment": {
    "schema": 1,
    "regime": "wigner_stationary",
    "dynamics": "frozen",
    "n_list": [8, 16],
    "param_rule": {"power": {"p_coef": 1.0, "p_exp": 2.0, "q_coef": 1.0, "q_exp": 1.8}},
    "mu0": {"dirac": {"at": 0.0}},
    "t_list": [0.5, 1.0],
    "moment_order": 4,
    "seed": 11,
    "declared": {"c_is_infinite": true}
  }
}"#;
        let cfg = write_config(tmp.path(), "exp.json", limit_cfg);
        let (d1, d2) = (tmp.path().join("a"), tmp.path().join("b"));
        for dir in [&d1, &d2] {
            let out = run(&[
                "limit-check",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
                "--jobs",
                "2",
            ]);
            if !out.status.success() {
                return Err(format!(
                    "limit-check failed: {}",
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
        }
        for name in ["report.csv", "report.json"] {
            if read(&d1, name) != read(&d2, name) {
                return Err(format!("frozen rerun differs in {name}"));
            }
        }

        // stochastic: same seed -> identical bytes; different seed -> different
        let sde_cfg = r#"{
  "schema": 1,
  "domain": "compact_alcove",
  "params": {"p": 8.0, "q": 6.0},
  "x0": [-0.4, 0.0, 0.5],
  "t_end": 0.05,
  "kappa": 1.0,
  "steps": 500,
  "replicas": 3,
  "seed": 7,
  "record_every": 10,
  "martingale_orders": [2]
}"#;
        let cfg = write_config(tmp.path(), "sde.json", sde_cfg);
        let (s1, s2, s3) = (
            tmp.path().join("s1"),
            tmp.path().join("s2"),
            tmp.path().join("s3"),
        );
        for (dir, seed) in [(&s1, "7"), (&s2, "7"), (&s3, "8")] {
            let out = run(&[
                "sde-run",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
                "--seed",
                seed,
            ]);
            if !out.status.success() {
                return Err(format!(
                    "sde-run failed: {}",
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
        }
        if read(&s1, "trajectory.csv") != read(&s2, "trajectory.csv") {
            return Err("same-seed stochastic rerun differs".into());
        }
        if read(&s1, "trajectory.csv") == read(&s3, "trajectory.csv") {
            return Err("different seeds produced identical paths".into());
        }
        if read(&s1, "replica_summary.json") != read(&s2, "replica_summary.json") {
            return Err("same-seed replica summary differs".into());
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => println!("[acceptance] criterion 10 (CSV determinism): PASS"),
        Err(m) => {
            println!("[acceptance] criterion 10 (CSV determinism): FAIL - {m}");
            panic!("criterion 10 failed: {m}");
        }
    }
}

#[test]
fn limit_check_dry_run_prints_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "exp.json",
        r#"{
  "experiment": {
    "schema": 1,
    "regime": "mp_stationary",
    "dynamics": "frozen",
    "n_list": [8, 16],
    "param_rule": {"power": {"p_coef": 2.0, "p_exp": 1.0, "q_coef": 1.0, "q_exp": 2.0}},
    "mu0": {"marchenko_pastur": {"c": 1.0, "t": 1.0}},
    "t_list": [0.5],
    "moment_order": 4
  }
}"#,
    );
    let out = run(&[
        "limit-check",
        "--config",
        cfg.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(out.status.success(), "{:?}", out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("dry-run ok"));
    assert!(text.contains("N = 16"));
}

#[test]
fn zeros_limit_experiment_config_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "zeros_exp.json",
        r#"{
  "zeros_experiment": {
    "kind": "wigner",
    "n_list": [10, 20],
    "param_rule": {"power": {"p_coef": 1.0, "p_exp": 3.0, "q_coef": 1.0, "q_exp": 2.0}},
    "moment_order": 4,
    "declared": {"c_is_infinite": true}
  }
}"#,
    );
    let outdir = tmp.path().join("out");
    let out = run(&[
        "limit-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(read(&outdir, "report.csv")).unwrap();
    assert!(csv.starts_with("N,t,l,empirical,predicted,gap\n"));
    assert!(csv.lines().count() > 5);
}

#[test]
fn freeprob_eval_and_moment_oracle_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "expr.json",
        r#"{
  "schema": 1,
  "expr": {"free_add": {"children": [
    {"semicircle": {"radius": 2.0}},
    {"dirac": {"at": 1.0}}
  ]}},
  "order": 4
}"#,
    );
    let out = run(&["freeprob-eval", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("m_0 = 1.0000000000000000e0"));
    assert!(text.contains("m_1 = 1.0000000000000000e0"));

    let oracle_cfg = write_config(
        tmp.path(),
        "oracle.json",
        r#"{
  "schema": 1,
  "domain": "compact_alcove",
  "p": 6.0, "q": 5.0, "a": 1.0, "b": 0.0, "n": 4,
  "s0": [1.0, 0.1, 0.3, 0.05, 0.15],
  "t_grid": [0.1, 0.2]
}"#,
    );
    let outdir = tmp.path().join("oracle_out");
    let out = run(&[
        "moment-oracle",
        "--config",
        oracle_cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(read(&outdir, "report.csv")).unwrap();
    assert!(csv.starts_with("t,l,value\n"));
}

#[test]
fn toml_configs_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "expr.toml",
        r#"schema = 1
order = 4

[expr.semicircle]
radius = 2.0
"#,
    );
    let out = run(&["freeprob-eval", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("m_2 = 1.0000000000000000e0"));
}
