use std::path::Path;
use std::process::Command;

use trickbench::{config, csvio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trickbench"))
}

const TINY: &str = r#"
[experiment]
algorithm = "td3"
env = "cartpole-balance"
seeds = [0, 1]
episodes = 2
eval_interval = 1
eval_episodes = 1

[td3]
hidden = [8, 8]
warm_start = 500
update_steps = 1
"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

#[test]
fn run_writes_curves_diagnostics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--jobs", "2", "--out"])
        .arg(&out)
        .env_remove("TRICKBENCH_SEED_OFFSET")
        .status()
        .unwrap();
    assert!(status.success());
    let curves = csvio::read_curves(&out.join("run.curves.csv")).unwrap();
    assert_eq!(curves.len(), 4);
    assert!(curves.iter().all(|r| (0.0..=1000.0).contains(&r.mean_return)));
    assert!(out.join("run.diagnostics.csv").exists());
    let resolved = config::load(&out.join("run.toml")).unwrap();
    assert_eq!(resolved, config::parse(TINY).unwrap());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn seed_offset_variable_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("TRICKBENCH_SEED_OFFSET", "40")
        .status()
        .unwrap();
    assert!(status.success());
    let seeds: Vec<_> = csvio::read_curves(&out.join("run.curves.csv"))
        .unwrap()
        .iter()
        .map(|r| r.seed)
        .collect();
    assert_eq!(seeds, vec![40, 40, 41, 41]);

    let bad = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("TRICKBENCH_SEED_OFFSET", "-3")
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn ablate_writes_one_csv_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("grid");
    let status = bin()
        .args(["ablate", "--config"])
        .arg(&cfg)
        .args(["--toggle", "input_normalization=on,off", "--jobs", "1", "--out"])
        .arg(&out)
        .env_remove("TRICKBENCH_SEED_OFFSET")
        .status()
        .unwrap();
    assert!(status.success());
    for stem in ["input_normalization-on", "input_normalization-off"] {
        assert_eq!(csvio::read_curves(&out.join(format!("{stem}.curves.csv"))).unwrap().len(), 4);
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "input_normalization=on");
    assert_ne!(rows[0][1], rows[1][1], "cells must hash differently");
    assert_eq!(rows[0][11], "", "the baseline has no effect size against itself");
}

#[test]
fn unknown_algorithm_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, TINY.replace("\"td3\"", "\"ddpg\"")).unwrap();
    let out = dir.path().join("out");
    let result = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("ddpg"));
    assert!(!out.exists());
}

#[test]
fn probe_writes_a_normalized_density() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("probe.csv");
    let status = bin()
        .args(["probe", "--kind", "gaussian", "--init", "lecun", "--n-states", "200", "--n-inits", "5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = csvio::read_probe(&out).unwrap();
    let width = rows[1].0 - rows[0].0;
    let mass: f64 = rows.iter().map(|(_, d)| d * width).sum();
    assert!((mass - 1.0).abs() < 1e-9, "{mass}");
}

#[test]
fn defaults_round_trip_through_the_parser() {
    let out = bin().args(["defaults", "--algorithm", "sac", "--env", "acrobot-swingup"]).output().unwrap();
    assert!(out.status.success());
    let c = config::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(c.episodes, 600);
    assert_eq!(c.sac.alpha, 0.2);
}
