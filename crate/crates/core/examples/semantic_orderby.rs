//! Ranks rows with pairwise model comparisons. n rows cost n(n-1)/2 calls.

use std::sync::Arc;

use semql::bench::{render_table, run_query, OutputFormat};
use semql::catalog::{Catalog, Table};
use semql::engine::EngineConfig;
use semql::llm::{Gateway, MockConfig, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::value::{DataType, Value};
use serde_json::json;

fn main() -> semql::Result<()> {
    let notes = ["a much longer complaint about sync", "short", "medium length note", "tiny"];
    let catalog = Catalog::new();
    catalog.register(Table::from_columns(
        "notes",
        vec![("note", DataType::Text, notes.map(Value::from).to_vec())],
    )?);

    let rules: MockConfig = serde_json::from_value(json!({
        "rules": [{"task": "compare", "verdict": {"kind": "shorter_first", "field": "note"}}]
    }))?;
    let gateway = Gateway::new(Arc::new(MockOracle::new(rules)?), "mock");
    let query = "SELECT note FROM notes ORDER BY s'{note} is more concise'";
    let out = run_query(query, &catalog, &gateway, OptimizerFlags::off(), &EngineConfig::default())?;
    print!("{}", render_table(&out.result.table, OutputFormat::Table)?);
    println!("{} comparisons for {} rows", out.result.llm_calls(), notes.len());
    Ok(())
}
