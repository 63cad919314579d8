use serde::Serialize;

use super::quality::{set_quality, QualityReport};
use super::run::{run_query, RunOutput};
use crate::catalog::Catalog;
use crate::engine::EngineConfig;
use crate::llm::Gateway;
use crate::optimizer::OptimizerFlags;
use crate::Result;

/// One configuration of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub name: String,
    pub optimizer: OptimizerFlags,
    pub engine: EngineConfig,
}

impl Variant {
    pub fn new(name: &str, optimizer: OptimizerFlags, engine: EngineConfig) -> Self {
        Variant {
            name: name.into(),
            optimizer,
            engine,
        }
    }
}

/// The plain plan first, then each optimization alone, then everything.
/// `base` supplies chunk size, batch size, workers and AQE parameters.
pub fn standard_variants(base: &EngineConfig) -> Vec<Variant> {
    let plain = EngineConfig {
        batching: false,
        fusion: false,
        aqe: false,
        ..base.clone()
    };
    let with = |batching, fusion, aqe| EngineConfig {
        batching,
        fusion,
        aqe,
        ..plain.clone()
    };
    let off = OptimizerFlags::off();
    vec![
        Variant::new("reference", off, plain.clone()),
        Variant::new("batching", off, with(true, false, false)),
        Variant::new("fusion", off, with(false, true, false)),
        Variant::new("batching+fusion", off, with(true, true, false)),
        Variant::new("aqe", off, with(true, true, true)),
        Variant::new("optimizer+aqe", OptimizerFlags::default(), with(true, true, true)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantReport {
    pub name: String,
    pub rows: usize,
    pub llm_calls: u64,
    pub aux_calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
    /// Sum of per-call model latencies.
    pub llm_latency_ms: f64,
    pub wall_ms: f64,
    /// Result rows scored against the first variant's.
    pub quality: QualityReport,
    pub chosen_paths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub query: String,
    pub variants: Vec<VariantReport>,
}

fn rendered_rows(out: &RunOutput) -> Vec<String> {
    out.result
        .table
        .rows()
        .map(|r| r.iter().map(|v| v.render()).collect::<Vec<_>>().join("\u{1f}"))
        .collect()
}

/// Runs `query` once per variant, each on a fresh gateway so no cached
/// response crosses variants.
pub fn run_bench(
    query: &str,
    catalog: &Catalog,
    gateway: impl Fn() -> Result<Gateway>,
    variants: &[Variant],
) -> Result<BenchReport> {
    let mut reports = Vec::with_capacity(variants.len());
    let mut reference: Option<Vec<String>> = None;
    for v in variants {
        let gw = gateway()?;
        log::info!("bench variant {}", v.name);
        let out = run_query(query, catalog, &gw, v.optimizer, &v.engine)?;
        let rows = rendered_rows(&out);
        let quality = set_quality(&rows, reference.get_or_insert_with(|| rows.clone()));
        let total = gw.snapshot();
        reports.push(VariantReport {
            name: v.name.clone(),
            rows: out.result.table.num_rows(),
            llm_calls: out.result.usage.calls,
            aux_calls: out.optimizer.aux_calls,
            input_tokens: total.usage.input_tokens,
            output_tokens: total.usage.output_tokens,
            cost: gw.cost(total.usage),
            llm_latency_ms: total.latency.as_secs_f64() * 1e3,
            wall_ms: out.result.wall.as_secs_f64() * 1e3,
            quality,
            chosen_paths: out.result.aqe_traces.iter().filter_map(|t| t.chosen.clone()).collect(),
        });
    }
    Ok(BenchReport {
        query: query.to_string(),
        variants: reports,
    })
}

impl BenchReport {
    /// A fixed-width summary, one line per variant.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{:<16} {:>6} {:>8} {:>10} {:>10} {:>10} {:>12} {:>6}\n",
            "variant", "rows", "calls", "in_tok", "out_tok", "cost", "llm_ms", "f1"
        );
        for v in &self.variants {
            out.push_str(&format!(
                "{:<16} {:>6} {:>8} {:>10} {:>10} {:>10.6} {:>12.1} {:>6.3}\n",
                v.name,
                v.rows,
                v.llm_calls + v.aux_calls,
                v.input_tokens,
                v.output_tokens,
                v.cost,
                v.llm_latency_ms,
                v.quality.f1
            ));
        }
        out
    }
}
