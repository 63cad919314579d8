//! Derives a new text column from each row and chains a second projection
//! over the first one's output.

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
        "movies",
        vec![
            ("title", DataType::Text, ["Heat", "Up", "Alien"].map(Value::from).to_vec()),
            (
                "overview",
                DataType::Text,
                [
                    "a detective hunts a crew of professional thieves across los angeles",
                    "an old man ties balloons to his house and flies away",
                    "the crew of a cargo ship meets a hostile creature",
                ]
                .map(Value::from)
                .to_vec(),
            ),
        ],
    )?);

    let rules: MockConfig = serde_json::from_value(json!({
        "rules": [
            {"task": "proj", "template": "summarize", "verdict": {"kind": "echo_words", "field": "overview", "words": 4}},
            {"task": "proj", "template": "genre", "field": "plot", "contains_any": ["crew"], "verdict": "thriller"},
            {"task": "proj", "template": "genre", "verdict": "family"}
        ]
    }))?;
    let gateway = Gateway::new(Arc::new(MockOracle::new(rules)?), "mock");
    let query = "SELECT title, s'Summarize {overview}' AS plot, s'The genre of {plot}' AS genre FROM movies";
    let out = run_query(query, &catalog, &gateway, OptimizerFlags::off(), &EngineConfig::default())?;
    print!("{}", render_table(&out.result.table, OutputFormat::Table)?);
    println!("{} calls", out.result.llm_calls());
    Ok(())
}
