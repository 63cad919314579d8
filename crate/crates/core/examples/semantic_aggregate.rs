//! Summarizes grouped values. Values are packed into as few prompts as the
//! context budget allows and partial answers are merged by further calls.

use std::sync::Arc;

use semql::bench::{render_table, run_query, OutputFormat};
use semql::catalog::{Catalog, Table};
use semql::engine::EngineConfig;
use semql::llm::{Gateway, MockConfig, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::value::{DataType, Value};
use serde_json::json;

fn main() -> semql::Result<()> {
    let n = 100;
    let catalog = Catalog::new();
    catalog.register(Table::from_columns(
        "papers",
        vec![
            ("venue", DataType::Int64, (0..n).map(|i| Value::Int(i % 2)).collect()),
            (
                "keyword",
                DataType::Text,
                (0..n).map(|i| Value::from(format!("keyword {i} on query processing").as_str())).collect(),
            ),
        ],
    )?);

    let rules: MockConfig = serde_json::from_value(json!({
        "rules": [{"task": "agg", "verdict": {"kind": "count_summary"}}]
    }))?;
    let query = "SELECT venue, sem_agg(s'Summarize the trends in {keyword}', keyword) AS trends \
                 FROM papers GROUP BY venue ORDER BY venue";

    for budget in [4096, 200] {
        let gateway = Gateway::new(Arc::new(MockOracle::new(rules.clone())?), "mock");
        let engine = EngineConfig {
            agg_budget: budget,
            ..EngineConfig::default()
        };
        let out = run_query(query, &catalog, &gateway, OptimizerFlags::off(), &engine)?;
        println!("budget {budget}: {} calls", out.result.llm_calls());
        print!("{}", render_table(&out.result.table, OutputFormat::Table)?);
    }
    Ok(())
}
