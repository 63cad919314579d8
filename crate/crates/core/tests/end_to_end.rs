//! Whole queries against a row-by-row reference interpreter that reads the
//! corpus verdicts directly instead of calling any model.

use std::collections::BTreeMap;
use std::sync::Arc;

use semql::bench::{generate_corpus, run_query, Corpus, CorpusSpec};
use semql::catalog::Catalog;
use semql::engine::EngineConfig;
use semql::llm::{Gateway, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::value::Value;

fn corpus(rows: usize, seed: u64) -> Corpus {
    let spec = CorpusSpec::new(rows, &[0.4, 0.6, 0.3], seed)
        .with_correlation(0, 1, 0.5)
        .with_nan_rate(0.1);
    generate_corpus(&spec).unwrap()
}

fn configs() -> Vec<EngineConfig> {
    let mut out = vec![EngineConfig::naive(), EngineConfig::default()];
    for chunk in [1, 7, 50] {
        out.push(EngineConfig {
            chunk_capacity: chunk,
            batch_size: 5,
            workers: 3,
            ..EngineConfig::default()
        });
    }
    out
}

fn run(c: &Corpus, q: &str, cfg: &EngineConfig) -> Vec<Vec<Value>> {
    let cat = Catalog::new();
    cat.register(c.table.clone());
    let gw = Gateway::new(Arc::new(MockOracle::new(c.rules.clone()).unwrap()), "mock");
    let out = run_query(q, &cat, &gw, OptimizerFlags::off(), cfg).unwrap();
    out.result.table.rows().collect()
}

fn int(v: &Value) -> i64 {
    match v {
        Value::Int(i) => *i,
        other => panic!("expected an integer, got {other:?}"),
    }
}

fn score(c: &Corpus, r: usize) -> i64 {
    int(&c.table.column("score").unwrap().values[r])
}

#[test]
fn filtered_group_counts() {
    let q = "SELECT score % 5 AS bucket, COUNT(*) AS n FROM corpus \
             WHERE score > 20 AND s'{text} mentions amber' AND s'{text} mentions basalt' \
             GROUP BY score % 5 ORDER BY bucket";
    for seed in [1, 2, 3] {
        let c = corpus(120, seed);
        let mut want: BTreeMap<i64, i64> = BTreeMap::new();
        for r in 0..c.table.num_rows() {
            if score(&c, r) > 20 && c.verdicts[0][r] && c.verdicts[1][r] {
                *want.entry(score(&c, r) % 5).or_default() += 1;
            }
        }
        let want: Vec<(i64, i64)> = want.into_iter().collect();
        for cfg in configs() {
            let got: Vec<(i64, i64)> = run(&c, q, &cfg).iter().map(|r| (int(&r[0]), int(&r[1]))).collect();
            assert_eq!(got, want, "seed {seed}, {cfg:?}");
        }
    }
}

#[test]
fn join_filter_order_limit() {
    let q = "SELECT a.id, b.id FROM corpus a JOIN corpus b ON a.score = b.score \
             WHERE a.id < b.id AND s'{a.text} mentions cobalt' ORDER BY a.id, b.id LIMIT 25";
    let c = corpus(80, 9);
    let mut want = Vec::new();
    for a in 0..c.table.num_rows() {
        for b in 0..c.table.num_rows() {
            if score(&c, a) == score(&c, b) && a < b && c.verdicts[2][a] {
                want.push((a as i64, b as i64));
            }
        }
    }
    want.sort();
    want.truncate(25);
    for cfg in configs() {
        let got: Vec<(i64, i64)> = run(&c, q, &cfg).iter().map(|r| (int(&r[0]), int(&r[1]))).collect();
        assert_eq!(got, want, "{cfg:?}");
    }
}

#[test]
fn projection_over_filtered_rows() {
    let q = "SELECT id, s'the first words of {text}' AS gist FROM corpus WHERE s'{text} mentions basalt'";
    let c = corpus(60, 4);
    let text = &c.table.column("text").unwrap().values;
    let want: Vec<(i64, String)> = (0..c.table.num_rows())
        .filter(|&r| c.verdicts[1][r])
        .map(|r| {
            let Value::Text(t) = &text[r] else { panic!() };
            (r as i64, t.split_whitespace().take(3).collect::<Vec<_>>().join(" "))
        })
        .collect();
    for cfg in configs() {
        let got: Vec<(i64, String)> = run(&c, q, &cfg)
            .iter()
            .map(|r| (int(&r[0]), r[1].render()))
            .collect();
        assert_eq!(got, want, "{cfg:?}");
    }
}

#[test]
fn relational_queries_make_no_calls() {
    let c = corpus(40, 5);
    let cat = Catalog::new();
    cat.register(c.table.clone());
    let gw = Gateway::new(Arc::new(MockOracle::new(c.rules.clone()).unwrap()), "mock");
    let out = run_query(
        "SELECT score, COUNT(*) FROM corpus WHERE score BETWEEN 10 AND 60 GROUP BY score",
        &cat,
        &gw,
        OptimizerFlags::default(),
        &EngineConfig::default(),
    )
    .unwrap();
    assert_eq!(out.total_calls(), 0);
    assert_eq!(gw.snapshot().calls, 0);
}
