//! Filters app reviews with a natural-language predicate, once tuple by
//! tuple and once with batched prompts, and compares the model calls.

use std::sync::Arc;

use semql::bench::{render_table, run_query, OutputFormat};
use semql::catalog::{Catalog, Table};
use semql::engine::EngineConfig;
use semql::llm::{Gateway, MockConfig, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::value::{DataType, Value};
use serde_json::json;

const REVIEWS: [&str; 10] = [
    "Great app, works perfectly",
    "crashes every time I open it",
    "nan",
    "love the new design",
    "too many ads, uninstalling",
    "great value and helpful support",
    "meh",
    "battery drain is awful",
    "love it",
    "nan",
];

fn main() -> semql::Result<()> {
    let catalog = Catalog::new();
    catalog.register(Table::from_columns(
        "reviews",
        vec![
            ("id", DataType::Int64, (1..=10).map(Value::Int).collect()),
            ("review", DataType::Text, REVIEWS.iter().map(|r| Value::from(*r)).collect()),
        ],
    )?);

    let rules: MockConfig = serde_json::from_value(json!({
        "rules": [{"task": "filter", "field": "review", "contains_any": ["great", "love"], "verdict": true}]
    }))?;
    let query = "SELECT id, review FROM reviews WHERE s'{review} is a positive review'";

    for (name, batching) in [("per tuple", false), ("batched", true)] {
        let gateway = Gateway::new(Arc::new(MockOracle::new(rules.clone())?), "mock");
        let engine = EngineConfig {
            batching,
            batch_size: 4,
            ..EngineConfig::naive()
        };
        let out = run_query(query, &catalog, &gateway, OptimizerFlags::off(), &engine)?;
        println!("{name}: {} calls", out.result.llm_calls());
        print!("{}", render_table(&out.result.table, OutputFormat::Table)?);
    }
    Ok(())
}
