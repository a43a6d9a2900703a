use std::fs;
use std::process::{Command, Output};

fn masterfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masterfl")).args(args).output().unwrap()
}

#[test]
fn lists_presets() {
    let out = masterfl(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["paper-vi", "paper-vi-ci", "stationary-quadratic", "shift-quadratic", "piecewise-quadratic"] {
        assert!(text.lines().any(|l| l == name), "missing {name}");
    }
}

#[test]
fn run_writes_artifacts_and_honours_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    fs::write(&cfg, "horizon = 40\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = masterfl(&[
        "run", "--preset", "stationary-quadratic", "--config", cfg.to_str().unwrap(),
        "--seed", "11", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("rounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["horizon"], 40);
    assert!(fs::read_to_string(out_dir.join("config.toml")).unwrap().contains("seed = 11"));
}

#[test]
fn compare_writes_master_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    fs::write(&cfg, "horizon = 150\n").unwrap();
    let out = masterfl(&[
        "compare", "--preset", "shift-quadratic", "--config", cfg.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cmp: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    let methods = cmp["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    assert_eq!(methods[0]["label"], "master-fedavg");
    assert_eq!(methods[1]["label"], "baseline-fedavg");
    assert_eq!(methods[1]["restarts"], 0);
}

#[test]
fn compare_refuses_different_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    fs::write(&a, "horizon = 20\nseed = 1\n").unwrap();
    fs::write(&b, "horizon = 20\nseed = 2\n").unwrap();
    let out = masterfl(&[
        "compare", "--preset", "stationary-quadratic", "--config", a.to_str().unwrap(),
        "--config", b.to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different seeds"));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "horizon = \n").unwrap();
    let cases: [&[&str]; 4] = [
        &["run", "--config", "/no/such/file.toml"],
        &["run", "--config", bad.to_str().unwrap()],
        &["run", "--preset", "nope"],
        &["run", "--preset", "stationary-quadratic", "--data", "/no/such.svm"],
    ];
    for args in cases {
        let out = masterfl(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn accept_runs_selected_criteria() {
    let out = masterfl(&["accept", "--only", "1", "--only", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.contains("[PASS]")));
}
