use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn semql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semql")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path) {
    let o = semql(&[
        "gen-corpus",
        "--out",
        dir.to_str().unwrap(),
        "--rows",
        "200",
        "--selectivity",
        "0.5,0.6,0.4",
        "--correlation",
        "1:2:0.5",
        "--nan-rate",
        "0.05",
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_then_run_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let labels = std::fs::read_to_string(p("labels.csv")).unwrap();
    let expected = labels
        .lines()
        .skip(1)
        .filter(|l| l.split(',').skip(1).all(|v| v == "1" || v == "true"))
        .count();

    let base = [
        "run",
        "--tables",
        &p("manifest.json"),
        "--query-file",
        &p("queries/conjunction.sql"),
        "--mock-oracle",
        &p("rules.json"),
        "--chunk-size",
        "25",
    ];
    let mut args = base.to_vec();
    let (m, t) = (p("metrics.json"), p("trace.json"));
    args.extend(["--output", "json", "--metrics-out", &m, "--trace-out", &t]);
    let o = semql(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), expected);
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    assert!(metrics["llm_calls"].as_u64().unwrap() > 0);
    assert!(metrics["execution"]["children"].is_array());
    let trace: Value = serde_json::from_str(&std::fs::read_to_string(&t).unwrap()).unwrap();
    assert_eq!(trace[0]["phases"].as_array().unwrap().len(), 3);

    let mut args = base.to_vec();
    args.extend(["--output", "csv", "--no-aqe", "--no-fusion", "--no-batching", "--no-deduce", "--no-compress"]);
    let o = semql(&args);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), expected + 1);

    let mut args = base.to_vec();
    args.push("--explain");
    let o = semql(&args);
    assert!(stdout(&o).contains("AdaptiveFilters"), "{}", stdout(&o));
}

#[test]
fn errors_are_structured() {
    let o = semql(&["explain", "-q", "SELECT FROM"]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert!(err["annotated"].as_str().unwrap().contains('^'));

    let o = semql(&["run", "-q", "SELECT 1"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");

    let o = semql(&["run", "-q", "SELECT 1", "--provider", "openai", "--base-url", "http://127.0.0.1:9/v1", "--api-key-env", "SEMQL_UNSET_FOR_TEST"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("SEMQL_UNSET_FOR_TEST"));
}

#[test]
fn bench_on_generated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bench.json");
    let o = semql(&["bench", "--seed", "5", "--report-out", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let variants = r["variants"].as_array().unwrap();
    assert_eq!(variants.len(), 6);
    assert_eq!(variants[0]["name"], "reference");
    assert!(stdout(&o).contains("batching+fusion"));
}
