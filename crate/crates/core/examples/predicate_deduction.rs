//! The optimizer asks an auxiliary model for cheap SQL predicates implied
//! by a semantic filter, verifies them, and pushes them below the join.
//! Rows they reject never reach the model.

use std::sync::Arc;

use semql::bench::run_query;
use semql::catalog::{Catalog, Table};
use semql::engine::EngineConfig;
use semql::llm::{Gateway, MockConfig, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::sql::explain;
use semql::value::{DataType, Value};
use serde_json::json;

fn main() -> semql::Result<()> {
    let reviews = ["nan", "Great!", "nan", "nan", "Useless", "Love it", "nan", "ok"];
    let catalog = Catalog::new();
    catalog.register(Table::from_columns(
        "user_reviews",
        vec![
            ("app_id", DataType::Int64, (0..8).map(|i| Value::Int(i % 2)).collect()),
            ("translated_review", DataType::Text, reviews.map(Value::from).to_vec()),
        ],
    )?);
    catalog.register(Table::from_columns(
        "apps",
        vec![
            ("app_id", DataType::Int64, vec![Value::Int(0), Value::Int(1)]),
            ("name", DataType::Text, ["Notes", "Maps"].map(Value::from).to_vec()),
        ],
    )?);

    let rules: MockConfig = serde_json::from_value(json!({
        "rules": [
            {"task": "deduce", "verdict": ["translated_review != 'nan'"]},
            {"task": "verify", "verdict": [true]},
            {"task": "filter", "field": "translated_review", "contains_any": ["great", "love"], "verdict": true}
        ]
    }))?;
    let query = "SELECT a.name, r.translated_review FROM apps a JOIN user_reviews r ON a.app_id = r.app_id \
                 WHERE s'{translated_review} is a positive user review'";
    let engine = EngineConfig::naive();

    for flags in [OptimizerFlags::off(), OptimizerFlags::default()] {
        let gateway = Gateway::new(Arc::new(MockOracle::new(rules.clone())?), "mock");
        let out = run_query(query, &catalog, &gateway, flags, &engine)?;
        println!(
            "deduce={}: {} filter calls, {} optimizer calls, {} rows",
            flags.deduce,
            out.result.llm_calls(),
            out.optimizer.aux_calls,
            out.result.table.num_rows()
        );
        print!("{}", explain(&out.optimized));
        for d in &out.optimizer.deductions {
            for p in &d.predicates {
                println!("  deduced {} (verified: {})", p.sql_text, p.verified);
            }
        }
    }
    Ok(())
}
