//! Runs a three-filter conjunction under each combination of filter fusion
//! and batching and prints calls, tokens and F1 against the plain plan.

use semql::bench::{generate_corpus, run_bench, standard_variants, CorpusSpec};
use semql::catalog::Catalog;
use semql::engine::EngineConfig;
use semql::llm::{Gateway, MockOracle};
use std::sync::Arc;

fn main() -> semql::Result<()> {
    let spec = CorpusSpec::new(400, &[0.5, 0.6, 0.3], 11).with_correlation(0, 1, 0.6);
    let corpus = generate_corpus(&spec)?;
    let catalog = Catalog::new();
    catalog.register(corpus.table.clone());

    let base = EngineConfig {
        chunk_capacity: 25,
        ..EngineConfig::default()
    };
    let variants: Vec<_> = standard_variants(&base)
        .into_iter()
        .filter(|v| !v.name.contains("aqe"))
        .collect();
    let report = run_bench(
        &corpus.conjunctive_query(),
        &catalog,
        || Ok(Gateway::new(Arc::new(MockOracle::new(corpus.rules.clone())?), "mock")),
        &variants,
    )?;
    print!("{}", report.summary());
    Ok(())
}
