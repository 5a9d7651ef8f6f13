use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tcqueue::validation::ValidationReport;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn base() -> Value {
    json!({
        "queue": {"lambdas": [0.6, 0.3], "k": 2, "mu": 1.2},
        "time_change": {"kind": "tempered", "theta": 0.5, "alpha": 0.7},
        "theta_power_reading": "a",
        "times": [0.0, 0.5, 1.0],
        "max_state": 8,
        "simulation": {"n_paths": 4000, "step": 0.001, "step_halving": false, "exec": "parallel"},
        "output_dir": "unused",
        "seed": 7
    })
}

struct Run {
    dir: tempfile::TempDir,
    out: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().unwrap_or(-1)
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.dir.path().join("out").join(name)).unwrap()
    }

    fn csv(&self, name: &str) -> Vec<Vec<String>> {
        self.read(name).lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
    }
}

fn run(cfg: &Value, args: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tcqueue"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    Run { dir, out }
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn probs_initial_row() {
    let r = run(&base(), &["probs"]);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.out.stderr));
    let rows = r.csv("probs.csv");
    assert_eq!(rows[0], ["0", "0", "0", "0", "1.0000000000000000e0", "0", "analytic"]);
    assert!(rows.iter().filter(|r| r[0] == "0").skip(1).all(|r| r[4] == "0"));
    assert!(r.read("probs.csv").starts_with("t,n,s,phase_index,prob,err,method\n"));
}

#[test]
fn identity_rows_match_uniformization() {
    let mut cfg = base();
    cfg["time_change"] = json!({"kind": "none"});
    let r = run(&cfg, &["probs"]);
    assert_eq!(r.code(), 0);
    let rows = r.csv("probs.csv");
    let pick = |m: &str| -> Vec<f64> { rows.iter().filter(|r| r[6] == m).map(|r| f(&r[4])).collect() };
    let (a, u) = (pick("analytic"), pick("uniformization-limit"));
    assert_eq!(a.len(), u.len());
    assert!(!a.is_empty());
    for (x, y) in a.iter().zip(&u) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn monte_carlo_rows_within_three_sigma() {
    let mut cfg = base();
    cfg["simulation"]["n_paths"] = json!(20_000);
    let r = run(&cfg, &["probs", "--method", "both"]);
    assert_eq!(r.code(), 0);
    let rows = r.csv("probs.csv");
    let mc: Vec<_> = rows.iter().filter(|r| r[6] == "montecarlo").collect();
    let an: Vec<_> = rows.iter().filter(|r| r[6] == "analytic").collect();
    assert_eq!(mc.len(), an.len());
    let mut checked = 0;
    for (a, m) in an.iter().zip(&mc) {
        assert_eq!(a[..4], m[..4]);
        let p = f(&a[4]);
        if p >= 1e-2 && f(&a[0]) > 0.0 {
            assert!((f(&m[4]) - p).abs() <= 3.0 * f(&m[5]), "{a:?} {m:?}");
            checked += 1;
        }
    }
    assert!(checked >= 10);
}

#[test]
fn outputs_are_byte_identical() {
    let a = run(&base(), &["probs", "--method", "both"]);
    let b = run(&base(), &["probs", "--method", "both"]);
    assert_eq!(a.read("probs.csv"), b.read("probs.csv"));
    let c = run(&base(), &["probs", "--method", "mc", "--seed", "8"]);
    let mc = |s: String| s.lines().filter(|l| l.ends_with("montecarlo")).collect::<Vec<_>>().join("\n");
    assert_ne!(mc(a.read("probs.csv")), mc(c.read("probs.csv")));
}

#[test]
fn unknown_keys_rejected() {
    let mut cfg = base();
    cfg["extra"] = json!(1);
    let r = run(&cfg, &["probs"]);
    assert_eq!(r.code(), 2);
    assert!(String::from_utf8_lossy(&r.out.stderr).contains("unknown field"));
    let mut cfg = base();
    cfg["queue"]["lambda"] = json!(1.0);
    assert_eq!(run(&cfg, &["probs"]).code(), 2);
    let mut cfg = base();
    cfg["series"] = json!({"shell_cap": 100, "typo": 1});
    assert_eq!(run(&cfg, &["probs"]).code(), 2);
    let mut cfg = base();
    cfg.as_object_mut().unwrap().remove("seed");
    assert_eq!(run(&cfg, &["probs"]).code(), 2);
}

#[test]
fn mean_column_and_residual() {
    let r = run(&base(), &["mean"]);
    assert_eq!(r.code(), 0);
    let rows = r.csv("mean.csv");
    assert_eq!(rows[0], ["0", "0", "0", ""]);
    for row in &rows[1..] {
        assert!(f(&row[3]).abs() < 1e-3, "{row:?}");
    }
    // Classical limit against Σ m q_m from uniformization.
    let mut cfg = base();
    cfg["time_change"] = json!({"kind": "none"});
    cfg["max_state"] = json!(60);
    let r = run(&cfg, &["mean"]);
    assert_eq!(r.code(), 0);
    let m1 = f(&r.csv("mean.csv")[2][1]);
    let probs = {
        let p = run(&cfg, &["probs"]);
        p.csv("probs.csv")
    };
    let want: f64 = probs
        .iter()
        .filter(|r| r[0] == "1.0000000000000000e0" && r[6] == "uniformization-limit")
        .map(|r| f(&r[3]) * f(&r[4]))
        .sum();
    assert!((m1 - want).abs() < 1e-3, "{m1} vs {want}");
}

#[test]
fn busy_monotone_and_matches_mc() {
    let mut cfg = base();
    cfg["busy"] = json!({"a": 2, "times": [0.0, 0.25, 0.5, 1.0, 1.5, 2.0], "n_paths": 20000});
    let r = run(&cfg, &["busy", "--method", "both"]);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.out.stderr));
    let rows = r.csv("busy.csv");
    assert_eq!(f(&rows[0][2]), 0.0);
    let band = ((2.0f64 / 0.05).ln() / (2.0 * 20000.0)).sqrt();
    for w in rows.windows(2) {
        assert!(f(&w[1][2]) >= f(&w[0][2]));
    }
    for row in &rows {
        assert!((f(&row[2]) - f(&row[4])).abs() < 3.0 * band, "{row:?}");
    }
    let rep: Value = serde_json::from_str(&r.read("busy_report.json")).unwrap();
    assert_eq!(rep["censored"], 0);
    let bad = run(&base(), &["busy"]);
    assert_eq!(bad.code(), 2);
}

#[test]
fn interevent_columns_and_ks() {
    let mut cfg = base();
    cfg["queue"] = json!({"lambdas": [0.8], "k": 2, "mu": 1.2});
    cfg["interevent"] = json!({"times": [0.0, 0.5, 1.0, 3.0], "samples": 10000, "level": 0.05});
    let r = run(&cfg, &["interevent", "--method", "both"]);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.out.stderr));
    let rows = r.csv("interevent.csv");
    assert_eq!(rows[0][1..], ["1.0000000000000000e0"; 3]);
    let ks: Value = serde_json::from_str(&r.read("interevent_ks.json")).unwrap();
    for e in ks.as_array().unwrap() {
        assert_eq!(e["ks"]["pass"], true, "{e}");
    }
    assert_eq!(r.read("interevent_arrival_samples.txt").lines().count(), 10000);

    cfg["time_change"] = json!({"kind": "none"});
    let r = run(&cfg, &["interevent"]);
    assert_eq!(r.code(), 0);
    for row in r.csv("interevent.csv") {
        let t = f(&row[0]);
        for (c, rate) in [(1, 0.8), (2, 2.4), (3, 3.2)] {
            assert!((f(&row[c]) - (-rate * t).exp()).abs() < 1e-9, "{row:?}");
        }
    }
    assert_eq!(run(&base(), &["interevent"]).code(), 2);
}

#[test]
fn simulate_deterministic_and_gamma() {
    let mut cfg = base();
    cfg["simulation"]["step_halving"] = json!(true);
    let a = run(&cfg, &["simulate"]);
    let b = run(&cfg, &["simulate"]);
    assert_eq!(a.code(), 0);
    assert_eq!(a.read("estimates.csv"), b.read("estimates.csv"));
    assert_eq!(a.read("raw_states_t1.0000000000000000e0.txt").lines().count(), 4000);
    let rep: Value = serde_json::from_str(&a.read("simulate_report.json")).unwrap();
    assert!(rep["halving_shift_sigma"].as_f64().unwrap() < 3.0);
    assert_eq!(rep["coarse_step"].as_f64().unwrap(), 2.0 * rep["fine_step"].as_f64().unwrap());

    cfg["time_change"] = json!({"kind": "gamma", "a": 1.0, "b": 1.0});
    let g = run(&cfg, &["simulate"]);
    assert_eq!(g.code(), 0);
    for row in g.csv("estimates.csv") {
        assert!(f(&row[5]).is_finite());
    }
    assert_eq!(run(&cfg, &["probs"]).code(), 2);
}

#[test]
fn validate_negative_control_and_round_trip() {
    let text = std::fs::read_to_string(repo().join("configs/injected_bug.json")).unwrap();
    let cfg: Value = serde_json::from_str(&text).unwrap();
    let r = run(&cfg, &["validate", "--criteria", "2,8", "--strict"]);
    assert_eq!(r.code(), 4);
    let report: ValidationReport = serde_json::from_str(&r.read("validation_report.json")).unwrap();
    assert!(!report.criteria[0].passed);
    assert!(report.criteria[1].passed);
    let again: ValidationReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(report, again);
    // Without --strict failures are reported but the exit code stays 0.
    assert_eq!(run(&cfg, &["validate", "--criteria", "2"]).code(), 0);

    let good: Value = serde_json::from_str(&std::fs::read_to_string(repo().join("configs/default.json")).unwrap()).unwrap();
    let r = run(&good, &["validate", "--criteria", "1,2,9", "--strict"]);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.out.stdout));
}

#[test]
fn shipped_configs_match_schema() {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(repo().join("docs/config.schema.json")).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let mut n = 0;
    for e in std::fs::read_dir(repo().join("configs")).unwrap() {
        let p = e.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert!(v.is_valid(&doc), "{}", p.display());
        n += 1;
    }
    assert!(n >= 4);
    let mut bad = base();
    bad["queue"]["extra"] = json!(0);
    assert!(!v.is_valid(&bad));
    assert!(v.is_valid(&base()));
}
