use std::fs;
use std::path::Path;
use std::process::Command;

use prunekit::harness::{replay, run, Experiment, ExperimentConfig, RunManifest, RunStatus, TaskConfig, MANIFEST_FILE};
use prunekit::linear::{AlphaMode, RecoveryTrialConfig};
use prunekit::net::{ArmSettings, BlobsConfig, PruneArm};
use prunekit::Error;

fn sawtooth_config(out: &Path) -> ExperimentConfig {
    let text = format!(
        r#"{{
            "experiment": "schedule_dump",
            "seed": 3,
            "out_dir": {out:?},
            "sparsity": {{"cyclical": {{"inner": {{"kind": "cubic", "target": 0.9}}, "total_iters": 400, "cycles": 4}}}}
        }}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn schedule_dump_draws_the_cyclical_sawtooth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sawtooth_config(&dir.path().join("s"));
    let manifest = run(&cfg).unwrap();
    assert_eq!(manifest.outputs, vec!["schedule.csv".to_string()]);
    let text = fs::read_to_string(dir.path().join("s/schedule.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.starts_with("t,sparsity,lr\n"));

    let rows = read_rows(&dir.path().join("s/schedule.csv"));
    assert_eq!(rows.len(), 401);
    let s: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for (t, row) in rows.iter().enumerate() {
        assert_eq!(row[0], t.to_string());
        assert_eq!(row[2], "");
        // cubic ramp restarted every 100 iterations, later cycles from half the target
        let cycle = (t / 100).min(3);
        let local = (t - 100 * cycle) as f64;
        let init = if cycle == 0 { 0.0 } else { 0.45 };
        let expect = 0.9 + (init - 0.9) * (1.0 - local / 100.0).powi(3);
        assert!((s[t] - expect).abs() < 1e-12, "t = {t}: {} vs {expect}", s[t]);
    }
    for b in [100, 200, 300] {
        assert!(s[b - 1] > 0.89 && s[b - 1] > s[b]);
        assert_eq!(s[b], 0.45);
    }
    assert_eq!(s[0], 0.0);
    assert_eq!(s[400], 0.9);
}

#[test]
fn empty_trials_fail_validation_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cell = RecoveryTrialConfig::new(5, 4, AlphaMode::Random);
    cell.trials = 0;
    let mut cfg = ExperimentConfig::new(Experiment::LinearSim { cells: vec![cell] });
    cfg.out_dir = out.clone();
    assert!(matches!(run(&cfg), Err(Error::Validation { .. })));
    assert!(!out.exists());
}

fn small_linear(out: &Path) -> ExperimentConfig {
    let mut a = RecoveryTrialConfig::new(5, 4, AlphaMode::Random);
    a.trials = 60;
    let mut b = RecoveryTrialConfig::new(5, 10, AlphaMode::Adversarial);
    b.trials = 60;
    let mut cfg = ExperimentConfig::new(Experiment::LinearSim { cells: vec![a, b] });
    cfg.seed = 17;
    cfg.jobs = 3;
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn small_prune(out: &Path) -> ExperimentConfig {
    let task = TaskConfig {
        blobs: BlobsConfig {
            samples_per_class: 40,
            ..BlobsConfig::default()
        },
        dims: vec![20, 16, 4],
        pretrain_iters: 100,
        ..TaskConfig::default()
    };
    let mut cfg = ExperimentConfig::new(Experiment::PruneTrain {
        task,
        arm: PruneArm::Cyclical { cycles: 3 },
        settings: ArmSettings::new(0.9, 300),
        tvpgd: None,
    });
    cfg.seed = 5;
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn manifest_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_linear(&dir.path().join("lin"));
    let manifest = run(&cfg).unwrap();
    assert_eq!(manifest.status, RunStatus::Ok);
    assert_eq!(manifest.experiment, "linear_sim");

    let loaded = RunManifest::load(&dir.path().join("lin").join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded, manifest);
    let raw: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("lin").join(MANIFEST_FILE)).unwrap()).unwrap();
    let echoed: ExperimentConfig = serde_json::from_value(raw["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);

    let rows = read_rows(&dir.path().join("lin/linear_sim.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][..4], ["5", "4", "random", "60"]);
    assert_eq!(rows[1][..4], ["5", "10", "adversarial", "60"]);
}

#[test]
fn linear_sim_appends_rows_under_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_linear(dir.path());
    run(&cfg).unwrap();
    run(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("linear_sim.csv")).unwrap();
    assert_eq!(text.matches("d,n,alpha_mode").count(), 1);
    let rows = read_rows(&dir.path().join("linear_sim.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], rows[2]);
}

#[test]
fn replay_regenerates_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    for (name, cfg) in [
        ("sched", sawtooth_config(&dir.path().join("sched"))),
        ("lin", small_linear(&dir.path().join("lin"))),
        ("prune", small_prune(&dir.path().join("prune"))),
    ] {
        let first = run(&cfg).unwrap();
        let again = dir.path().join(format!("{name}_replay"));
        let second = replay(&dir.path().join(name).join(MANIFEST_FILE), &again).unwrap();
        assert_eq!(first.outputs, second.outputs);
        assert!(!first.outputs.is_empty());
        for file in &first.outputs {
            let a = fs::read(dir.path().join(name).join(file)).unwrap();
            let b = fs::read(again.join(file)).unwrap();
            assert!(a == b, "{name}/{file} differs on replay");
        }
    }
}

#[test]
fn runtime_failure_marks_manifest_failed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_prune(dir.path());
    if let Experiment::PruneTrain { settings, .. } = &mut cfg.experiment {
        settings.base_lr = 1e300;
    }
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.kind(), "non_finite");
    let m = RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.is_some());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prunekit"))
}

#[test]
fn cli_reports_invalid_config_as_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"experiment": "linear_sim", "cells": [{"d": 5, "n": 4, "alpha_mode": "random", "trials": 0}]}"#,
    )
    .unwrap();
    let out = cli()
        .args(["linear-sim", "--config"])
        .arg(&path)
        .arg("--out-dir")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1);
    let line: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["status"], "error");
    assert_eq!(line["kind"], "validation");
    assert!(!dir.path().join("o").exists());

    fs::write(&path, "{ not json").unwrap();
    let out = cli().args(["schedule-dump", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_schedule_dump_writes_csv_and_reports_ok() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sched.json");
    fs::write(&path, sawtooth_config(Path::new("ignored")).to_json().unwrap()).unwrap();
    let out_dir = dir.path().join("o");
    let out = cli()
        .args(["schedule-dump", "--seed", "9", "--config"])
        .arg(&path)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line: serde_json::Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert_eq!(line["status"], "ok");
    assert_eq!(read_rows(&out_dir.join("schedule.csv")).len(), 401);
    assert_eq!(RunManifest::load(&out_dir.join(MANIFEST_FILE)).unwrap().config.seed, 9);
}
