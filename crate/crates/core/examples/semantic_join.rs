//! Matches reviews to app categories with a natural-language join
//! condition. Every left/right pair is judged, so the call count is the
//! product of the input sizes (or its batched ceiling).

use std::sync::Arc;

use semql::bench::{render_table, run_query, OutputFormat};
use semql::catalog::{Catalog, Table};
use semql::engine::EngineConfig;
use semql::llm::{Gateway, MockConfig, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::value::{DataType, Value};
use serde_json::json;

fn main() -> semql::Result<()> {
    let catalog = Catalog::new();
    catalog.register(Table::from_columns(
        "reviews",
        vec![(
            "review",
            DataType::Text,
            ["the puzzle levels are clever", "tracks my running pace", "photos look sharp"]
                .map(Value::from)
                .to_vec(),
        )],
    )?);
    catalog.register(Table::from_columns(
        "categories",
        vec![("category", DataType::Text, ["puzzle games", "running fitness", "photos camera"].map(Value::from).to_vec())],
    )?);

    let rules: MockConfig = serde_json::from_value(json!({
        "rules": [{"task": "join", "verdict": {"kind": "shares_word", "left": "review", "right": "category"}}]
    }))?;
    let query = "SELECT r.review, c.category FROM reviews r JOIN categories c \
                 ON s'{r.review} is about an app in category {c.category}'";

    for batching in [false, true] {
        let gateway = Gateway::new(Arc::new(MockOracle::new(rules.clone())?), "mock");
        let engine = EngineConfig {
            batching,
            ..EngineConfig::naive()
        };
        let out = run_query(query, &catalog, &gateway, OptimizerFlags::off(), &engine)?;
        println!("batching={batching}: {} calls", out.result.llm_calls());
        print!("{}", render_table(&out.result.table, OutputFormat::Table)?);
    }
    Ok(())
}
