use std::fs;
use std::io::Write;

use masterfl::acceptance::piecewise_config;
use masterfl::experiment::{
    compare, compare_to_dir, execute, load_config, run_experiment, ConfigOverrides, RunConfig, Summary, CSV_HEADER,
};
use masterfl::master::RunMode;

fn preset(name: &str, seed: u64, horizon: usize) -> RunConfig {
    let mut c = load_config(Some(name), None, &ConfigOverrides { seed: Some(seed), data_path: None }).unwrap();
    c.horizon = horizon;
    c
}

#[test]
fn same_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = preset("shift-quadratic", 7, 150);
    run_experiment(&config, &dir.path().join("a")).unwrap();
    run_experiment(&config, &dir.path().join("b")).unwrap();
    let a = fs::read(dir.path().join("a/rounds.csv")).unwrap();
    let b = fs::read(dir.path().join("b/rounds.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!a.contains(&b'\r'));
}

#[test]
fn csv_has_header_and_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let config = preset("stationary-quadratic", 2, 90);
    run_experiment(&config, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 90);
    for (i, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("{},", i + 1)));
        assert_eq!(row.split(',').count(), CSV_HEADER.len());
    }
}

#[test]
fn epoch_ledger_partitions_the_horizon() {
    for seed in 1..=3 {
        let dir = tempfile::tempdir().unwrap();
        let config = preset("shift-quadratic", seed, 300);
        run_experiment(&config, dir.path()).unwrap();
        let summary: Summary = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        let mut next = 1;
        for e in &summary.epochs {
            assert_eq!(e.start, next);
            assert!(e.end >= e.start);
            next = e.end + 1;
        }
        assert_eq!(next, 301);
        assert_eq!(summary.restarts + 1, summary.epochs.len());
        let mut next = 1;
        for b in &summary.blocks {
            assert_eq!(b.start, next);
            next = b.end + 1;
        }
        assert_eq!(next, 301);
    }
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = piecewise_config(240, 4).unwrap();
    run_experiment(&config, &dir.path().join("first")).unwrap();
    let echoed = fs::read_to_string(dir.path().join("first/config.toml")).unwrap();
    let reloaded = load_config(None, Some(&echoed), &ConfigOverrides::default()).unwrap();
    assert_eq!(reloaded, config);
    run_experiment(&reloaded, &dir.path().join("second")).unwrap();
    for f in ["rounds.csv", "summary.json"] {
        assert_eq!(
            fs::read(dir.path().join("first").join(f)).unwrap(),
            fs::read(dir.path().join("second").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn baseline_never_restarts() {
    let mut config = preset("shift-quadratic", 1, 400);
    config.mode = RunMode::SingleInstanceBaseline;
    let outcome = execute(&config).unwrap();
    assert_eq!(outcome.summary.restarts, 0);
    assert_eq!(outcome.summary.epochs.len(), 1);
    assert!(outcome.run.rounds.iter().all(|r| !r.test1_fired && !r.test2_fired));
}

#[test]
fn identical_configs_give_identical_columns() {
    let config = preset("stationary-quadratic", 5, 64);
    let (cmp, _) = compare(&[config.clone(), config]).unwrap();
    assert_eq!(cmp.methods.len(), 2);
    assert_eq!(cmp.methods[0], cmp.methods[1]);
}

#[test]
fn master_vs_baseline_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let master = preset("shift-quadratic", 3, 300);
    let mut baseline = master.clone();
    baseline.mode = RunMode::SingleInstanceBaseline;
    let cmp = compare_to_dir(&[master, baseline], dir.path()).unwrap();
    assert!(dir.path().join("comparison.json").is_file());
    assert!(dir.path().join("1-master-fedavg/rounds.csv").is_file());
    assert!(dir.path().join("2-baseline-fedavg/summary.json").is_file());
    assert_eq!(cmp.methods[1].restarts, 0);
    assert!(cmp.methods[0].restart_rounds.len() >= cmp.methods[1].restart_rounds.len());
}

#[test]
fn compare_refuses_mismatched_runs() {
    let a = preset("stationary-quadratic", 1, 32);
    let b = preset("stationary-quadratic", 2, 32);
    assert!(compare(&[a.clone(), b]).is_err());
    let c = preset("shift-quadratic", 1, 32);
    assert!(compare(&[a, c]).is_err());
}

#[test]
fn libsvm_source_runs_from_a_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    for i in 0..60 {
        let (label, x) = if i % 2 == 0 { (1, 1.0) } else { (-1, -1.0) };
        writeln!(file, "{label} 1:{x} 2:{}", 0.1 * (i % 5) as f64).unwrap();
    }
    let overrides = ConfigOverrides { seed: Some(3), data_path: Some(file.path().to_path_buf()) };
    let text = "horizon = 40\nn_dpus = 3\n[loss]\nlambda = 0.01\n[data]\nsource = \"synthetic-quadratic\"\noptimum = [0.0]\nnoise = 0.1\nsize = { kind = \"fixed\", size = 10 }\n";
    let config = load_config(None, Some(text), &overrides).unwrap();
    let outcome = execute(&config).unwrap();
    assert_eq!(outcome.summary.loss_kind, "binary-logistic");
    assert!(outcome.summary.mean_accuracy.unwrap() > 0.6);
}

#[test]
fn invalid_configs_are_rejected() {
    let none = ConfigOverrides::default();
    assert!(load_config(Some("no-such-preset"), None, &none).is_err());
    assert!(load_config(Some("stationary-quadratic"), Some("horizon = 0"), &none).is_err());
    assert!(load_config(Some("stationary-quadratic"), Some("n_dpus = 0"), &none).is_err());
    assert!(load_config(Some("stationary-quadratic"), Some("bogus = 1"), &none).is_err());
    let missing = ConfigOverrides { seed: None, data_path: Some("/definitely/missing.svm".into()) };
    assert!(load_config(Some("stationary-quadratic"), None, &missing).is_err());
}
