use std::path::Path;
use std::process::{Command, Output};

fn densecoord(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densecoord")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const TINY: &str = r#"{"k": 2, "m": 3, "l": 2, "n_snapshots": 2, "seed": 5}"#;

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = densecoord(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "results.json", "results.diagnostics.json", "resolved-config.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);
}

#[test]
fn overrides_take_precedence_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = densecoord(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--override",
        "snr_ref_db=20",
        "--seed",
        "9",
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("resolved-config.json")).unwrap()).unwrap();
    assert_eq!(resolved["snr_ref_db"], 20.0);
    assert_eq!(resolved["seed"], 9);
    assert_eq!(resolved["k"], 2);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = densecoord(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
        assert_eq!(o.status.code(), Some(0));
        csvs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.json");
    let o = densecoord(&["run", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), r#"{"k": 2, "bogus": 1}"#);
    let o = densecoord(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = densecoord(&["study", "nonexistent", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_scenario_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"k": 12, "m": 2, "l": 4, "n_snapshots": 1}"#);
    let out = dir.path().join("out");
    let o = densecoord(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_detects_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    let o = densecoord(&["verify", "--out", clean.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let first = std::fs::read_to_string(clean.join("verify.txt")).unwrap();
    assert!(!first.contains("FAIL"));

    let o = densecoord(&["verify", "--out", clean.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(clean.join("verify.txt")).unwrap(), first);

    let faulty = dir.path().join("faulty");
    let o = densecoord(&["verify", "--out", faulty.to_str().unwrap(), "--inject-fault", "solver-tolerance"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(std::fs::read_to_string(faulty.join("verify.txt")).unwrap().contains("FAIL"));
}
