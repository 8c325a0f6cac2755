use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn certkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certkit"))
        .args(args)
        .env_remove("CERTKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn envelope(args: &[&str]) -> Value {
    let out = certkit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/envelope.schema.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::draft202012::new(&schema).expect("schema compiles")
}

fn assert_valid(v: &Value) {
    let errors: Vec<String> = schema().iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn noiseless_ghz_is_certified_at_one() {
    let v = envelope(&["certify-state", "--target", "ghz:3", "--noise", "none", "--eps", "1", "--no-timing"]);
    let f = v["report"]["estimate"].as_f64().unwrap();
    assert!((f - 1.0).abs() < 1e-12, "{f}");
    assert!((v["report"]["exact_fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(v["wall_clock_seconds"].is_null());
    assert_valid(&v);
}

#[test]
fn depolarized_state_estimate_is_close() {
    let v = envelope(&["certify-state", "--target", "ghz:4", "--noise", "depolarizing:0.2", "--seed", "3", "--no-timing"]);
    let r = &v["report"];
    let est = r["estimate"].as_f64().unwrap();
    let exact = r["exact_fidelity"].as_f64().unwrap();
    assert!((exact - (0.8 + 0.2 / 16.0)).abs() < 1e-12);
    assert!((est - exact).abs() < 0.1);
    assert_eq!(r["budget"]["n1"], 8000);
    assert_valid(&v);
}

#[test]
fn every_command_matches_the_schema() {
    let runs: [&[&str]; 7] = [
        &["certify-state", "--target", "w:3", "--noise", "dephasing:0.1", "--truncate", "1"],
        &["certify-process", "--target", "cnot", "--noise", "local-depolarizing:0.1", "--eps", "0.3"],
        &["certify-cv", "--target", "cat:2", "--actual", "mixture:2", "--points", "50"],
        &["learn-hamiltonian", "--n", "3", "--trials", "2"],
        &["sample-relevance", "--target", "cluster:4", "--samples", "20"],
        &["repro-fig-wigner", "--runs", "2", "--points", "40", "--grid", "5"],
        &["repro-fig-rms", "--n-min", "2", "--n-max", "4", "--trials", "2"],
    ];
    for args in runs {
        let v = envelope(args);
        assert_eq!(v["command"], args[0]);
        assert!(v["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
        assert_valid(&v);
    }
}

#[test]
fn schema_rejects_malformed_envelopes() {
    let mut v = envelope(&["sample-relevance", "--target", "ghz:2", "--samples", "3", "--no-timing"]);
    assert_valid(&v);
    v["report"].as_object_mut().unwrap().remove("strategy");
    assert!(!schema().is_valid(&v));
    v["command"] = "certify-everything".into();
    assert!(!schema().is_valid(&v));
}

#[test]
fn output_is_identical_across_thread_counts() {
    let args = ["certify-state", "--target", "random:4:7", "--noise", "depolarizing:0.1", "--n1", "400", "--no-timing"];
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip(["1", "4"]) {
        let mut a = args.to_vec();
        a.extend(["--threads", threads, "--out", dir.path().to_str().unwrap()]);
        let out = certkit(&a);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["certify-state.json", "certify-state-samples.csv"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between thread counts");
    }
    let v: Value = serde_json::from_slice(&fs::read(dirs[0].path().join("certify-state.json")).unwrap()).unwrap();
    assert_eq!(v["ledgers"][0], "certify-state-samples.csv");
    assert_eq!(csv_rows(&dirs[0].path().join("certify-state-samples.csv")).len(), 400);
}

#[test]
fn learning_is_identical_across_thread_counts() {
    let run = |threads: &str| {
        let out = certkit(&["learn-hamiltonian", "--n", "3", "--trials", "3", "--no-timing", "--threads", threads]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# defaults\ntarget = ghz:3\nnoise = depolarizing:0.5\nn1 = 64\nexact = true\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let v = envelope(&["certify-state", "--config", cfg, "--no-timing"]);
    assert_eq!(v["config"]["n1"], 64);
    assert_eq!(v["config"]["noise"], "depolarizing:0.5");
    assert_eq!(v["report"]["budget"]["allocation"]["mode"], "exact");

    let v = envelope(&["certify-state", "--config", cfg, "--n1", "32", "--noise", "none", "--no-timing"]);
    assert_eq!(v["config"]["n1"], 32);
    assert_eq!(v["report"]["estimate"].as_f64().unwrap(), 1.0);
}

#[test]
fn threads_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_certkit"))
        .args(["sample-relevance", "--target", "ghz:3", "--samples", "5"])
        .env("CERTKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_certkit"))
        .args(["sample-relevance", "--target", "ghz:3", "--samples", "5"])
        .env("CERTKIT_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn configuration_errors_exit_with_two() {
    let bad: [&[&str]; 7] = [
        &["certify-state", "--target", "bogus:3"],
        &["certify-state", "--target", "ghz:3", "--eps", "-1"],
        &["certify-state", "--target", "ghz:3", "--noise", "sparkles:0.1"],
        &["certify-state", "--target", "w:3", "--strategy", "stabilizer"],
        &["certify-state", "--target", "ghz:3", "--shots", "10", "--exact"],
        &["certify-state", "--config", "/nonexistent/certkit.conf", "--target", "ghz:3"],
        &["frobnicate"],
    ];
    for args in bad {
        let out = certkit(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn computation_errors_exit_with_three() {
    let out = certkit(&["certify-state", "--target", "w:14", "--noise", "depolarizing:0.1", "--n1", "10"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_exits_cleanly() {
    let out = certkit(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["certify-state", "certify-process", "certify-cv", "learn-hamiltonian", "sample-relevance", "repro-fig-wigner", "repro-fig-rms"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn wigner_figure_ledgers() {
    let dir = tempfile::tempdir().unwrap();
    let out = certkit(&["repro-fig-wigner", "--no-timing", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let errors = csv_rows(&dir.path().join("repro-fig-wigner-errors.csv"));
    assert_eq!(errors.len(), 5 * 1000);
    let points = csv_rows(&dir.path().join("repro-fig-wigner-points.csv"));
    assert_eq!(points.len(), 5 * 1000);
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("repro-fig-wigner.json")).unwrap()).unwrap();
    assert_valid(&v);
    let exact = v["report"]["exact"].as_f64().unwrap();
    assert!((exact - 0.5).abs() < 0.05, "{exact}");
    for row in errors.iter().filter(|r| r[1] == "1000") {
        let err: f64 = row[3].parse().unwrap();
        assert!(err < 0.1, "run {} ends at error {err}", row[0]);
    }
}

#[test]
fn sampled_distribution_tracks_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = certkit(&["sample-relevance", "--target", "w:3", "--samples", "4000", "--seed", "11", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let rows = csv_rows(&dir.path().join("sample-relevance-draws.csv"));
    assert_eq!(rows.len(), 4000);
    let zzz: Vec<_> = rows.iter().filter(|r| r[1] == "ZZZ").collect();
    let w: f64 = zzz[0][3].parse().unwrap();
    assert!((w - 1.0 / 8.0).abs() < 1e-12);
    let freq = zzz.len() as f64 / 4000.0;
    assert!((freq - w).abs() < 5.0 * (w * (1.0 - w) / 4000.0).sqrt(), "{freq}");
}
