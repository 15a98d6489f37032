use std::path::Path;
use std::process::Command;

use pbp_core::harness::{ExperimentConfig, CSV_HEADER};

fn pbp(args: &[&str], dir: &Path, seed: Option<&str>) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pbp"));
    cmd.args(args).current_dir(dir);
    match seed {
        Some(s) => cmd.env("PBP_SEED", s),
        None => cmd.env_remove("PBP_SEED"),
    };
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"{
  "env": {"name": "frozen-lake", "size": 4},
  "algorithm": {"kind": "pbp-hsvi"},
  "hsvi": {"budget": {"iterations": 20}},
  "ids_per_class": 5,
  "episodes": 40,
  "seed": 1
}"#;

#[test]
fn plan_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    pbp(&["plan", "--config", "cfg.json", "--out", "p"], dir.path(), Some("7"));
    let p = dir.path().join("p");
    assert!(p.join("policy.json").exists());
    let copied: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(p.join("config.json")).unwrap()).unwrap();
    assert_eq!(copied.seed, 7);

    let stdout = pbp(
        &["evaluate", "--config", "cfg.json", "--policy", "p/policy.json", "--out", "e"],
        dir.path(),
        None,
    );
    assert!(stdout.contains("frozen-lake-4 pbp-hsvi"));
    let csv = std::fs::read_to_string(dir.path().join("e/results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 1);
}

#[test]
fn sweep_writes_one_row_per_probability() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG.replace("pbp-hsvi", "noperc")).unwrap();
    pbp(
        &["sweep", "--config", "cfg.json", "--probabilities", "0,0.5,1", "--mode", "pure", "--out", "s"],
        dir.path(),
        None,
    );
    let mut rdr = csv::Reader::from_path(dir.path().join("s/results.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[4] == "pure"));
    assert_eq!(&rows[2][5], "1.0");
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = pbp(&["selftest"], dir.path(), None);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        CONFIG.replace(r#""kind": "pbp-hsvi""#, r#""kind": "tpbp-hsvi", "eps": -1"#),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pbp"))
        .args(["plan", "--config", "cfg.json"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("algorithm.eps"));
}
