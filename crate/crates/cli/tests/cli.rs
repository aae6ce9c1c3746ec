use std::path::{Path, PathBuf};
use std::process::Command as Process;

use msk_core::linalg::SymMatrix;
use msk_tap::config::{load_config, parse_config, ConfigError};
use msk_tap::report::RunReport;
use msk_tap::{run, Cli, Command};
use serde_json::Value;
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn cli(command: Command, config: &Path, seed: Option<u64>) -> Cli {
    Cli {
        command,
        config: config.to_path_buf(),
        seed,
        threads: None,
        out: None,
        json: false,
        dry_run: false,
    }
}

fn column(report: &RunReport, table: &str, col: &str) -> Vec<Value> {
    let t = report.table(table).unwrap();
    let c = t.column(col).unwrap();
    t.rows.iter().map(|r| r[c].clone()).collect()
}

fn floats(values: Vec<Value>) -> Vec<f64> {
    values.into_iter().map(|v| v.as_f64().unwrap()).collect()
}

#[test]
fn bipartite_preset_resolves() {
    let c = parse_config(r#"{"preset": "bipartite", "model": {"beta": 0.1}}"#).unwrap();
    let spec = c.model_spec().unwrap();
    assert_eq!(spec.lambdas, vec![0.5, 0.5]);
    assert_eq!(
        spec.delta2,
        SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    );
}

#[test]
fn two_copies_preset_is_diagonal() {
    let spec = parse_config(r#"{"preset": "two-copies", "model": {"beta": 0.1}}"#)
        .unwrap()
        .model_spec()
        .unwrap();
    assert_eq!(spec.delta2.get(0, 1), 0.0);
    assert!(spec.delta2.get(0, 0) > 0.0 && spec.delta2.get(1, 1) > 0.0);
}

#[test]
fn lambda_sum_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"model": {"lambdas": [0.6, 0.6], "delta2": [[1, 0], [0, 1]], "beta": 0.1}}"#,
    );
    let err = load_config(&path).unwrap_err();
    assert!(matches!(err, ConfigError::Invalid(_)));
    assert!(err.to_string().contains("lambdas sum to"), "{err}");
}

#[test]
fn asymmetric_delta2_and_negative_beta_are_rejected() {
    let asym = r#"{"model": {"lambdas": [0.5, 0.5], "delta2": [[1, 0.5], [0.4, 1]], "beta": 0.1}}"#;
    assert!(parse_config(asym).unwrap().model_spec().is_err());
    let neg = r#"{"preset": "sk", "model": {"beta": -0.1}}"#;
    assert!(parse_config(neg).unwrap().model_spec().is_err());
    let neg_h = r#"{"preset": "sk", "model": {"beta": 0.1, "h": -1}}"#;
    assert!(parse_config(neg_h).unwrap().model_spec().is_err());
}

#[test]
fn unknown_field_reports_its_path() {
    let err = parse_config(r#"{"preset": "sk", "model": {"beta": 0.1}, "chain": {"sweeps": 10}}"#)
        .unwrap_err();
    match err {
        ConfigError::Parse { path, message } => {
            assert_eq!(path, "chain.sweeps");
            assert!(message.contains("unknown field"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(parse_config(r#"{"preset": "sk", "model": {"beta": 0.1}, "extra": 1}"#).is_err());
}

#[test]
fn beta_c_on_bipartite() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"preset": "bipartite", "model": {"beta": 0.2}}"#,
    );
    let r = run(&cli(Command::BetaC, &path, Some(1))).unwrap();
    assert!((floats(column(&r, "critical", "beta_c"))[0] - std::f64::consts::SQRT_2).abs() < 1e-12);
    assert_eq!(column(&r, "critical", "alpha")[0], Value::from(2));
    assert!((floats(column(&r, "critical", "beta_0"))[0] - 0.5).abs() < 1e-12);
}

#[test]
fn solve_q_at_infinite_temperature() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"preset": "convex", "model": {"beta": 0.0, "h": 0.3}}"#,
    );
    let r = run(&cli(Command::SolveQ, &path, None)).unwrap();
    let q = floats(column(&r, "q", "q"));
    assert_eq!(q.len(), 2);
    for v in q {
        assert_eq!(v, 0.3f64.tanh().powi(2));
    }
}

#[test]
fn seed_is_drawn_and_recorded_when_absent() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"preset": "sk", "model": {"beta": 0.2, "n": 6}}"#,
    );
    let r = run(&cli(Command::Oracle, &path, None)).unwrap();
    assert_eq!(r.config.seed, Some(r.seed));
}

#[test]
fn dry_run_lists_jobs_only() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"preset": "convex", "model": {"beta_over_beta0": 0.5, "h": 0.3},
            "n_list": [128, 256, 512, 1024], "n_disorder": 3}"#,
    );
    let mut c = cli(Command::ScalingStudy, &path, Some(9));
    c.dry_run = true;
    let r = run(&c).unwrap();
    let plan = r.table("plan").unwrap();
    assert_eq!(plan.rows.len(), 12);
    assert!(r.table("scaling").is_none());
    assert!(column(&r, "plan", "chain_seed").iter().all(|v| v.is_u64()));
}

#[test]
fn echoed_config_reproduces_results() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            Command::ScalingStudy,
            r#"{"preset": "bipartite", "model": {"beta_over_beta0": 0.5, "h": 0.3},
                "n_list": [6, 8, 10, 12], "n_disorder": 3, "estimator": "exact"}"#,
        ),
        (
            Command::Mcmc,
            r#"{"preset": "convex", "model": {"beta": 0.2, "h": 0.3, "n": 24},
                "chain": {"n_sweeps": 200, "burn_in_sweeps": 50, "n_replicas": 2}}"#,
        ),
    ];
    for (command, body) in cases {
        let path = write(&dir, "orig.json", body);
        let first = run(&cli(command, &path, None)).unwrap();
        let echo = write(
            &dir,
            "echo.json",
            &serde_json::to_string(&first.config).unwrap(),
        );
        let second = run(&cli(command, &echo, None)).unwrap();
        assert_eq!(second.seed, first.seed);
        assert_eq!(second.config_sha256, first.config_sha256);
        assert_eq!(second.tables, first.tables, "{command:?}");
        assert_eq!(second.summary, first.summary);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"preset": "bipartite", "model": {"beta": 0.2, "h": 0.3, "n": 16},
            "chain": {"n_sweeps": 100, "burn_in_sweeps": 20, "n_replicas": 3}}"#,
    );
    let bin = env!("CARGO_BIN_EXE_msk-tap");
    let outputs: Vec<Value> = ["1", "4"]
        .iter()
        .map(|t| {
            let out = Process::new(bin)
                .args([
                    "mcmc",
                    "--config",
                    path.to_str().unwrap(),
                    "--seed",
                    "3",
                    "--json",
                    "--threads",
                    t,
                ])
                .output()
                .unwrap();
            assert!(out.status.success());
            let mut v: Value = serde_json::from_slice(&out.stdout).unwrap();
            v["wall_clock_secs"] = Value::Null;
            v
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn csv_and_json_files_are_written() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"preset": "sk", "model": {"beta": 0.3, "h": 0.1}}"#,
    );
    let out = dir.path().join("run.csv");
    let status = Process::new(env!("CARGO_BIN_EXE_msk-tap"))
        .args([
            "solve-q",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "4",
            "--json",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# version: "));
    assert!(csv.contains("# seed: 4"));
    assert!(csv.contains("# config_sha256: "));
    assert!(csv.contains("# table: q\nspecies,lambda,q\n"));
    let report: RunReport =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(report.command, "solve-q");
    assert_eq!(report.seed, 4);
}

#[test]
fn failures_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_msk-tap");
    let bad = write(
        &dir,
        "bad.json",
        r#"{"preset": "sk", "model": {"beta": 0.1, "hh": 1}}"#,
    );
    let out = Process::new(bin)
        .args(["beta-c", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.hh"));

    let missing_n = write(
        &dir,
        "n.json",
        r#"{"preset": "sk", "model": {"beta": 0.1}}"#,
    );
    let out = Process::new(bin)
        .args(["oracle", "--config", missing_n.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = Process::new(bin)
        .args([
            "beta-c",
            "--config",
            dir.path().join("absent.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn every_subcommand_runs_on_a_small_instance() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "c.json",
        r#"{"preset": "convex", "model": {"beta_over_beta0": 0.3, "h": 0.3, "n": 8},
            "chain": {"n_sweeps": 200, "burn_in_sweeps": 20, "n_replicas": 2},
            "n_disorder": 3, "n_eta": 20, "estimator": "exact"}"#,
    );
    let commands = [
        Command::BetaC,
        Command::SolveQ,
        Command::Sensitivity,
        Command::Oracle,
        Command::Mcmc,
        Command::TapCheck,
        Command::TapIterate,
        Command::CavityCheck,
        Command::Concentration,
    ];
    for command in commands {
        let r = run(&cli(command, &path, Some(2))).unwrap_or_else(|e| panic!("{command:?}: {e:#}"));
        assert!(!r.tables.is_empty());
        assert!(r.tables.iter().all(|t| !t.rows.is_empty()), "{command:?}");
    }
    let r = run(&cli(Command::Concentration, &path, Some(2))).unwrap();
    assert_eq!(r.summary["pass"], Value::Bool(true));
    let r = run(&cli(Command::TapIterate, &path, Some(2))).unwrap();
    assert_eq!(r.summary["status"], Value::from("converged"));
}
