use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MSAR: &str = r#"{"k": 2, "mu": [5, 10], "sigma": [1, 2], "phi": [0.75], "P": [[0.95, 0.10], [0.05, 0.90]]}"#;

fn msregime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msregime")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn assert_valid(report: &Value) {
    let schema: Value = serde_json::from_str(msregime::report::SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn simulate(dir: &Path, n: &str, seed: &str) -> String {
    let config = dir.join("msar.json");
    std::fs::write(&config, MSAR).unwrap();
    let out = dir.join(format!("y{seed}.csv"));
    let report = json(&msregime(&["simulate", "--family", "msar", "--n", n, "--seed", seed, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert_valid(&report);
    out.display().to_string()
}

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "500", "5");
    let text = std::fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y,state"));
    assert_eq!(lines.count(), 500);
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("y5.csv.json")).unwrap()).unwrap();
    assert_valid(&sidecar);
    assert_eq!(sidecar["result"]["n"], 500);

    let again = dir.path().join("again.csv");
    std::fs::copy(&a, &again).unwrap();
    simulate(dir.path(), "500", "5");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn simulate_names_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"mu": [5, 10], "sigma": [1, 2], "phi": [0.75]}"#).unwrap();
    let csv = dir.path().join("y.csv");
    let out = msregime(&["simulate", "--family", "msar", "--n", "50", "--config", config.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`k`"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_reports_nine_msar_rows() {
    let dir = tempfile::tempdir().unwrap();
    let y = simulate(dir.path(), "300", "8");
    let report = json(&msregime(&["fit", "--input", &y, "--model", "msar", "--p", "1", "--k", "2", "--seed", "1"]));
    assert_valid(&report);
    let r = &report["result"];
    let names: Vec<&str> = r["coefficients"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["mu_1", "mu_2", "phi_1", "sig_1", "sig_2", "p_11", "p_12", "p_21", "p_22"]);
    let (ll, k, t) = (r["loglik"].as_f64().unwrap(), r["n_params"].as_f64().unwrap(), r["t_eff"].as_f64().unwrap());
    assert!((r["bic"].as_f64().unwrap() - (k * t.ln() - 2.0 * ll)).abs() < 1e-9);
    assert!((r["aic"].as_f64().unwrap() - (2.0 * k - 2.0 * ll)).abs() < 1e-9);
}

#[test]
fn fit_with_k1_downgrades() {
    let dir = tempfile::tempdir().unwrap();
    let y = simulate(dir.path(), "100", "9");
    let report = json(&msregime(&["fit", "--input", &y, "--model", "msar", "--k", "1"]));
    assert_eq!(report["result"]["family"], "ar");
    assert!(!report["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn test_reports_validate() {
    let dir = tempfile::tempdir().unwrap();
    let y = simulate(dir.path(), "200", "3");
    let dl = dir.path().join("dl.json");
    std::fs::write(&dl, r#"{"N2": 500}"#).unwrap();
    let runs: [&[&str]; 3] = [
        &["test", "dl-mc", "--input", &y, "--N", "19", "--config", dl.to_str().unwrap()],
        &["test", "chp", "--input", &y, "--N", "50"],
        &["test", "lmc-lrt", "--input", &y, "--N", "9"],
    ];
    for args in runs {
        let report = json(&msregime(args));
        assert_valid(&report);
        for row in report["result"]["rows"].as_array().unwrap() {
            assert!(row["pvalue"].is_number());
            assert!(row["critical_values"].get("0.95").is_some());
        }
    }
}

#[test]
fn report_written_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let y = simulate(dir.path(), "120", "4");
    let out = dir.path().join("fit.json");
    let o = msregime(&["fit", "--input", &y, "--model", "ar", "--p", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_valid(&report);
    assert_eq!(report["result"]["p"], 2);
}

#[test]
fn data_commands() {
    let report = json(&msregime(&["data", "list"]));
    assert_valid(&report);
    let names: Vec<&str> = report["result"]["datasets"].as_array().unwrap().iter().map(|d| d["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["hamilton84GNP", "chp10GNP", "USGNP", "USRGDP"]);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gnp.csv");
    let report = json(&msregime(&["data", "export", "--name", "hamilton84GNP", "--out", out.to_str().unwrap()]));
    assert_valid(&report);
    assert_eq!(report["result"]["growth_observations"], 135);
    let fit = json(&msregime(&["fit", "--input", out.to_str().unwrap(), "--column", "growth", "--model", "ar", "--p", "4"]));
    assert_eq!(fit["result"]["t_eff"], 131);

    assert_eq!(msregime(&["data", "export", "--name", "nope"]).status.code(), Some(2));
    assert_eq!(msregime(&["data", "export", "--name", "USGNP"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(msregime(&["fit", "--model", "msar"]).status.code(), Some(2));
    assert_eq!(msregime(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    std::fs::write(&flat, format!("y\n{}", "1.0\n".repeat(40))).unwrap();
    let out = msregime(&["fit", "--input", flat.to_str().unwrap(), "--model", "msar"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
