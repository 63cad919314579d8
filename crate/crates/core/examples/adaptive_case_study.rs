//! Adaptive execution of three correlated filters over 864 rows. The first
//! 27 rows measure selectivities and correlations, the next 81 race the
//! candidate plans, and the winner handles the remaining 756.

use std::sync::Arc;

use semql::aqe::{AqeConfig, Objective};
use semql::bench::{generate_corpus, run_query, CorpusSpec};
use semql::catalog::Catalog;
use semql::engine::EngineConfig;
use semql::llm::{Gateway, LatencyModel, MockOracle};
use semql::optimizer::OptimizerFlags;

fn main() -> semql::Result<()> {
    let spec = CorpusSpec::new(864, &[0.66, 0.77, 0.22], 7).with_correlation(0, 1, 0.755);
    let corpus = generate_corpus(&spec)?;
    let catalog = Catalog::new();
    catalog.register(corpus.table.clone());

    // Fused prompts are cheap here and batched items slow.
    let mut rules = corpus.rules.clone();
    rules.latency = LatencyModel {
        per_call_ms: 10.0,
        single_item_ms: 0.0,
        fused_item_ms: 0.0,
        batched_item_ms: 20.0,
    };
    let gateway = Gateway::new(Arc::new(MockOracle::new(rules)?), "mock");
    let engine = EngineConfig {
        chunk_capacity: 27,
        aqe_config: AqeConfig {
            objective: Objective::Latency,
            ..AqeConfig::default()
        },
        ..EngineConfig::default()
    };
    let out = run_query(&corpus.conjunctive_query(), &catalog, &gateway, OptimizerFlags::off(), &engine)?;
    let trace = &out.result.aqe_traces[0];

    println!("phase rows: {:?}", trace.phase_rows());
    if let Some(stats) = &trace.stats {
        println!("sample selectivities: {:?}", stats.selectivity);
    }
    for c in &trace.candidates {
        match &c.metrics {
            Some(m) => println!(
                "  {:<22} {:>8.0} ms {:>5} calls  accuracy {:.3}{}",
                c.path.label,
                m.latency_ms,
                m.calls,
                m.accuracy,
                if c.passed { "" } else { "  (rejected)" }
            ),
            None => println!("  {:<22} skipped: {}", c.path.label, c.skipped.as_deref().unwrap_or("")),
        }
    }
    println!("chosen: {}", trace.chosen.as_deref().unwrap_or("-"));
    println!(
        "{} rows selected with {} calls (a plain plan needs {})",
        out.result.table.num_rows(),
        out.result.llm_calls(),
        corpus.table.num_rows() * 3
    );
    let truth = corpus.conjunction(&[0, 1, 2]).iter().filter(|&&b| b).count();
    assert_eq!(out.result.table.num_rows(), truth);
    Ok(())
}
