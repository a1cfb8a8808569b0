use std::process::Command;

use covshrink::cli::run;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covshrink"))
}

fn iris() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv")
}

fn run_ok(args: &[&str]) -> String {
    run(std::iter::once("covshrink").chain(args.iter().copied())).expect("command succeeds")
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    let body: String = csv.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    reader.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn reruns_are_byte_identical() {
    for args in [
        vec!["--seed", "5", "moments", "--p", "3", "--m", "1", "--n", "6", "--mc-only", "--reps", "5000"],
        vec!["--seed", "5", "risk-sweep", "--p", "3", "--m", "1", "--n", "10", "--beta-list", "1,0.01", "--reps", "5000"],
        vec!["--seed", "5", "converge", "--p", "3", "--m", "1", "--n", "10", "--beta-list", "1,1e-6", "--reps", "5000"],
    ] {
        assert_eq!(run_ok(&args), run_ok(&args));
    }
}

#[test]
fn seed_changes_monte_carlo_output() {
    let base = ["moments", "--p", "3", "--m", "1", "--n", "6", "--mc-only", "--reps", "5000"];
    let a = run_ok(&[&["--seed", "1"], &base[..]].concat());
    let b = run_ok(&[&["--seed", "2"], &base[..]].concat());
    assert_ne!(data_rows(&a), data_rows(&b));
}

#[test]
fn csv_and_json_agree_to_six_digits() {
    let args = ["risk-table", "--p", "4", "--m", "2", "--n-list", "7,9"];
    let csv = run_ok(&args);
    let json: Value = serde_json::from_str(&run_ok(&[&args[..], &["--format", "json"]].concat())).unwrap();
    let rows = data_rows(&csv);
    let json_rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), json_rows.len());
    for (r, j) in rows.iter().zip(json_rows) {
        for (cell, v) in r.iter().zip(j.as_array().unwrap()) {
            match v {
                Value::Number(x) => {
                    let x = x.as_f64().unwrap();
                    let y: f64 = cell.parse().unwrap();
                    assert!((x - y).abs() <= 5e-6 * x.abs().max(1e-300), "{cell} vs {x}");
                }
                Value::String(s) => assert_eq!(cell, s),
                Value::Null => assert_eq!(cell, ""),
                other => panic!("unexpected cell {other}"),
            }
        }
    }
    assert_eq!(json["meta"]["seed"], "1");
}

#[test]
fn csv_header_lists_columns() {
    let out = run_ok(&["coeffs", "--p", "3", "--m", "1", "--n", "10"]);
    let header = out.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "p,m,n,row,U,SDS,KG,MA1,MA2");
    assert_eq!(data_rows(&out).len(), 3 + 4);
}

#[test]
fn coeffs_all_covers_reference_configurations() {
    let out = run_ok(&["coeffs", "--all"]);
    let mut configs: Vec<(String, String, String)> = data_rows(&out).into_iter().map(|r| (r[0].clone(), r[1].clone(), r[2].clone())).collect();
    configs.dedup();
    assert_eq!(configs.len(), 30);
}

#[test]
fn output_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("covshrink-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("coeffs.json");
    let printed = run_ok(&["--format", "json", "--output", path.to_str().unwrap(), "coeffs", "--p", "2", "--m", "1", "--n", "8"]);
    assert!(printed.is_empty());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["command"], "coeffs");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn binary_exit_codes() {
    let ok = bin().args(["coeffs", "--p", "2", "--m", "1", "--n", "6"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8(ok.stdout).unwrap().contains("c2"));

    let bad_config = bin().args(["coeffs", "--p", "3", "--m", "3", "--n", "6"]).output().unwrap();
    assert_eq!(bad_config.status.code(), Some(2));
    assert!(String::from_utf8(bad_config.stderr).unwrap().starts_with("error:"));

    let unknown = bin().args(["coeffs", "--bogus"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));

    let missing = bin().args(["classify", "--data", "/nonexistent/iris.csv"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let help = bin().arg("--help").output().unwrap();
    assert!(help.status.success());
    for sub in ["coeffs", "moments", "risk-table", "risk-sweep", "converge", "multiblock", "classify"] {
        assert!(String::from_utf8_lossy(&help.stdout).contains(sub), "{sub} missing from help");
    }
}

#[test]
fn classify_reports_every_estimator() {
    let out = run_ok(&["classify", "--data", iris(), "--scheme", "loo", "--reps", "20000"]);
    let rows = data_rows(&out);
    for kind in ["U", "SDS", "KG", "MA1", "MA2"] {
        assert!(rows.iter().any(|r| r.iter().any(|c| c == kind)), "{kind} missing");
    }
}

#[test]
fn zero_threads_is_rejected() {
    let err = run(["covshrink", "--threads", "0", "coeffs", "--p", "2", "--m", "1", "--n", "6"]).unwrap_err();
    assert_eq!(err.code, 2);
}
