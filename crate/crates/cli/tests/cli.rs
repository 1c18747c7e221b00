//! End-to-end runs of the `sandwich` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use sandwich_cli::ExperimentConfig;

fn sandwich(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sandwich"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const GNM: &str = r#"{"schema": 1, "n": 4, "partition": {"kind": "trivial"},
    "constraint": {"type": "box", "lo": [3], "hi": [3]}, "epsilon": 0.5, "trials": 50, "seed": 11}"#;

const BUDGET: &str = r#"{"schema": 1, "n": 7,
    "partition": {"kind": "explicit", "labels": [0,0,0,0,0,0,0,0,0,0,1,1,1,1,1,1,1,1,1,1,2]},
    "constraint": {"type": "budget", "costs": [1, 2, 0], "budget": 12}, "epsilon": 0.5, "trials": 200}"#;

#[test]
fn solve_gnm() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "gnm.json", GNM);
    let out = dir.path().join("out");
    let o = sandwich(&["solve", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol = read_json(&out.join("solution.json"));
    assert_eq!(sol["solution"]["q_star"][0].as_f64().unwrap(), 0.5);
    let diag = read_json(&out.join("diagnostics.json"));
    assert_eq!(diag["diagnostics"]["mu"].as_f64().unwrap(), 3.0);
    let loaded = ExperimentConfig::load(Path::new(&config)).unwrap();
    assert_eq!(sol["meta"]["config_hash"].as_str().unwrap(), loaded.hash());
    assert_eq!(sol["meta"]["seed"].as_u64().unwrap(), 11);
}

#[test]
fn solve_budget_dual() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "budget.json", BUDGET);
    let out = dir.path().join("out");
    let o = sandwich(&["solve", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let dual = read_json(&out.join("solution.json"))["solution"]["duals"][0].as_f64().unwrap();
    assert!((dual - 0.244026).abs() < 1e-6, "{dual}");
    assert!((dual - 0.2445).abs() < 1e-3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let infeasible = write_config(
        dir.path(),
        "inf.json",
        r#"{"schema": 1, "n": 4, "partition": {"kind": "trivial"}, "constraint": {"type": "budget", "costs": [1], "budget": -1}}"#,
    );
    assert_eq!(sandwich(&["solve", "--config", &infeasible, "--out", out]).status.code(), Some(2));

    let typo = write_config(dir.path(), "typo.json", r#"{"schema": 1, "n": 4, "partition": {"kind": "trivial"}, "trails": 3}"#);
    let o = sandwich(&["solve", "--config", &typo, "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails"));

    let bad_eps = write_config(dir.path(), "eps.json", GNM);
    let o = sandwich(&["couple", "--config", &bad_eps, "--epsilon", "1.5", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));

    let limited = write_config(
        dir.path(),
        "limit.json",
        &BUDGET.replace(r#""trials": 200"#, r#""trials": 200, "solver": {"max_iter": 1}"#),
    );
    assert_eq!(sandwich(&["solve", "--config", &limited, "--out", out]).status.code(), Some(3));

    let capped = write_config(
        dir.path(),
        "cap.json",
        r#"{"schema": 1, "n": 6, "partition": {"kind": "balanced", "k": 3}, "trials": 5, "caps": {"enumeration": 10}}"#,
    );
    assert_eq!(sandwich(&["sample", "--config", &capped, "--out", out]).status.code(), Some(4));
    assert_eq!(sandwich(&["verify", "--config", &capped, "--out", out]).status.code(), Some(4));

    let o = sandwich(&["sample", "--config", &bad_eps, "--strategy", "mcmc", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--allow-approx"));
}

#[test]
fn sample_zero_trials_writes_headers_only() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "gnm.json", GNM);
    let out = dir.path().join("out");
    let o = sandwich(&["sample", "--config", &config, "--trials", "0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("profiles.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(fs::read_to_string(out.join("graphs.txt")).unwrap().lines().count(), 1);
}

#[test]
fn sample_rows_match_the_profile() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "budget.json", BUDGET);
    let out = dir.path().join("out");
    let o = sandwich(&["sample", "--config", &config, "--strategy", "dp", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("profiles.csv")).unwrap();
    let rows: Vec<Vec<u64>> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 200);
    for (t, r) in rows.iter().enumerate() {
        assert_eq!(r[0], t as u64);
        assert!(r[1] + 2 * r[2] <= 12);
    }
}

#[test]
fn mcmc_sampling_reports_chain_diagnostics() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "mcmc.json",
        &BUDGET.replace(r#""trials": 200"#, r#""trials": 300, "mcmc": {"burn_in": 1000}"#),
    );
    let out = dir.path().join("out");
    let o = sandwich(&["sample", "--config", &config, "--strategy", "mcmc", "--allow-approx", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&out.join("sample_summary.json"));
    assert_eq!(summary["exact"], Value::Bool(false));
    let rate = summary["chain"]["acceptance_rate"].as_f64().unwrap();
    assert!(rate > 0.0 && rate <= 1.0);
}

#[test]
fn couple_flags_invalid_epsilon_and_single_trial() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "gnm.json", GNM);
    let out = dir.path().join("out");
    let o = sandwich(&["couple", "--config", &config, "--trials", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = read_json(&out.join("couple_summary.json"));
    // n = 4 is far too small for the sandwich bound: ε < sqrt(12 λ).
    assert_eq!(s["valid"], Value::Bool(false));
    assert_eq!(s["theorem_delta"]["valid"], Value::Bool(false));
    assert_eq!(s["rate"]["degenerate"], Value::Bool(true));
    assert_eq!(s["rate"]["trials"].as_u64().unwrap(), 1);
}

#[test]
fn verify_suite_passes_and_fault_is_named() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let o = sandwich(&["verify", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&Path::new(out).join("verify.json"))["report"].clone();
    assert_eq!(report["passed"], Value::Bool(true));
    let empty = report["cases"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "empty-n4")
        .unwrap();
    assert_eq!(empty["empty"], Value::Bool(true));
    assert!(empty["checks"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["name"] == "profile-law" && c["status"] == "skipped" && c["detail"] == "empty-set"));

    let o = sandwich(&["verify", "--out", out, "--inject-fault", "corrupt-ent"]);
    assert_eq!(o.status.code(), Some(5));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("budget-n5/profile-law"), "{stderr}");
}

#[test]
fn outputs_are_byte_identical_across_runs_and_jobs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "budget.json", BUDGET);
    for (cmd, files) in [
        ("sample", &["graphs.txt", "profiles.csv", "sample_summary.json"][..]),
        ("couple", &["trials.csv", "couple_summary.json"][..]),
    ] {
        let mut runs = Vec::new();
        for (i, jobs) in ["1", "8", "8"].iter().enumerate() {
            let out = dir.path().join(format!("{cmd}{i}"));
            let o = sandwich(&[cmd, "--config", &config, "--jobs", jobs, "--seed", "5", "--out", out.to_str().unwrap()]);
            assert!(o.status.success());
            runs.push(files.iter().map(|f| fs::read(out.join(f)).unwrap()).collect::<Vec<_>>());
        }
        assert_eq!(runs[0], runs[1], "{cmd}");
        assert_eq!(runs[1], runs[2], "{cmd}");
    }
}
