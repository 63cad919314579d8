use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::json;

use semql::bench::{generate_corpus, run_query, Corpus, CorpusSpec};
use semql::catalog::{Catalog, Chunk, Table};
use semql::engine::{eval_sem_filter, eval_sem_orderby, EngineConfig, SemCtx};
use semql::llm::{Gateway, MockConfig, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::sql::{EvalMode, NlExpr};
use semql::value::{DataType, Value};

fn gateway(cfg: MockConfig) -> Gateway {
    Gateway::new(Arc::new(MockOracle::new(cfg).unwrap()), "mock")
}

fn selected(c: &Corpus, q: &str, flags: OptimizerFlags, cfg: &EngineConfig) -> (BTreeSet<i64>, u64) {
    let cat = Catalog::new();
    cat.register(c.table.clone());
    let gw = gateway(c.rules.clone());
    let out = run_query(q, &cat, &gw, flags, cfg).unwrap();
    let ids = out.result.table.column("id").unwrap().values.iter().map(|v| match v {
        Value::Int(i) => *i,
        _ => unreachable!(),
    });
    (ids.collect(), out.result.llm_calls())
}

fn truth(c: &Corpus) -> BTreeSet<i64> {
    let all: Vec<usize> = (0..c.filters.len()).collect();
    c.conjunction(&all)
        .iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .map(|(r, _)| r as i64)
        .collect()
}

fn text_chunk(values: &[String]) -> Chunk {
    let t = Table::from_columns(
        "t",
        vec![("text", DataType::Text, values.iter().map(|v| Value::from(v.as_str())).collect())],
    )
    .unwrap();
    Chunk::new(Arc::new(t.schema.clone()), t.columns.clone(), 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn results_ignore_chunking_and_strategy(
        rows in 1usize..120,
        sel in prop::collection::vec(0.1f64..0.9, 2..4),
        seed in any::<u64>(),
        chunk in 1usize..64,
        batch in 1usize..20,
        fusion in any::<bool>(),
        batching in any::<bool>(),
        aqe in any::<bool>(),
    ) {
        let c = generate_corpus(&CorpusSpec::new(rows, &sel, seed)).unwrap();
        let cfg = EngineConfig {
            chunk_capacity: chunk,
            batch_size: batch,
            fusion,
            batching,
            aqe,
            ..EngineConfig::default()
        };
        let (got, _) = selected(&c, &c.conjunctive_query(), OptimizerFlags::off(), &cfg);
        prop_assert_eq!(got, truth(&c));
    }

    #[test]
    fn batch_count_law(n in 0usize..200, k in 1usize..40) {
        let values: Vec<String> = (0..n).map(|i| format!("row {i}{}", if i % 4 == 0 { " good" } else { "" })).collect();
        let cfg: MockConfig = serde_json::from_value(json!({
            "rules": [{"task": "filter", "contains_any": ["good"], "verdict": true}]
        })).unwrap();
        let gw = gateway(cfg);
        let ctx = SemCtx::new(&gw).with_workers(4);
        let e = NlExpr::parse("{text} is good").unwrap();
        let chunk = text_chunk(&values);
        let (batched, s) = eval_sem_filter(&ctx, &chunk, &e, EvalMode::Batched(k)).unwrap();
        prop_assert_eq!(s.calls, n.div_ceil(k) as u64);
        let (single, s) = eval_sem_filter(&ctx, &chunk, &e, EvalMode::PerTuple).unwrap();
        prop_assert_eq!(s.calls, n as u64);
        prop_assert_eq!(batched, single);
    }

    #[test]
    fn orderby_is_a_permutation(values in prop::collection::vec("[a-z ]{0,12}", 0..12), shorter in any::<bool>()) {
        let verdict = if shorter {
            json!({"kind": "shorter_first", "field": "text"})
        } else {
            json!(true)
        };
        let cfg: MockConfig = serde_json::from_value(json!({"rules": [{"task": "compare", "verdict": verdict}]})).unwrap();
        let gw = gateway(cfg);
        let ctx = SemCtx::new(&gw);
        let e = NlExpr::parse("{text} comes first").unwrap();
        let (order, s) = eval_sem_orderby(&ctx, &text_chunk(&values), &e, false).unwrap();
        let n = values.len();
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert!(s.calls as usize <= n * n.saturating_sub(1) / 2);
        if shorter {
            let lens: Vec<usize> = order.iter().map(|&i| values[i].len()).collect();
            prop_assert!(lens.windows(2).all(|w| w[0] <= w[1]), "{:?}", lens);
        }
    }

    #[test]
    fn verified_pushdown_preserves_results(
        rows in 10usize..150,
        nan in 0.0f64..0.3,
        seed in any::<u64>(),
    ) {
        let c = generate_corpus(&CorpusSpec::new(rows, &[0.3, 0.5], seed).with_nan_rate(nan)).unwrap();
        let mut with_deduction = c.clone();
        let extra: MockConfig = serde_json::from_value(json!({"rules": [
            {"task": "deduce", "verdict": ["text != 'nan'"]},
            {"task": "verify", "verdict": [true]}
        ]})).unwrap();
        with_deduction.rules.rules.splice(0..0, extra.rules);
        let engine = EngineConfig::naive();
        let q = c.conjunctive_query();
        let (plain, before) = selected(&c, &q, OptimizerFlags::off(), &engine);
        let flags = OptimizerFlags { compress: false, deduce: true };
        let (pushed, after) = selected(&with_deduction, &q, flags, &engine);
        prop_assert_eq!(&plain, &pushed);
        prop_assert_eq!(before - after, c.stats.nan_rows as u64);
    }
}
