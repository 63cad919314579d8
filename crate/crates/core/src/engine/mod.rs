//! Chunk-at-a-time pull execution of physical plans.

mod eval;
mod fusion;
mod metrics;
mod operators;
mod parallel;
mod physical;
pub mod prompts;
mod semantic;

use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::aqe::{AqeConfig, AqeTrace};
use crate::catalog::{Catalog, Chunk, Table, DEFAULT_CHUNK_CAPACITY};
use crate::llm::{Gateway, UsageSnapshot};
use crate::sql::PlanNode;
use crate::{Error, Result};

pub use eval::{compile, eval, predicate_mask, ChunkRow, Compiled, PairRow, RowRef};
pub use fusion::{as_step, fuse, fuse_filters, fuse_steps};
pub use metrics::{CallStats, MetricsHandle, MetricsNode, OpMetrics};
pub use parallel::parallel_map;
pub use physical::physical_plan;
pub use semantic::{
    eval_fused, eval_sem_agg, eval_sem_filter, eval_sem_join, eval_sem_orderby, eval_sem_proj,
    FusedOutput, SemCtx,
};

pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_AGG_BUDGET: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub chunk_capacity: usize,
    pub batch_size: usize,
    pub batching: bool,
    pub fusion: bool,
    pub aqe: bool,
    /// Threads issuing model calls within one operator.
    pub workers: usize,
    /// Context budget, in estimated tokens, of one aggregation prompt.
    pub agg_budget: u64,
    pub aqe_config: AqeConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            chunk_capacity: DEFAULT_CHUNK_CAPACITY,
            batch_size: DEFAULT_BATCH_SIZE,
            batching: true,
            fusion: true,
            aqe: true,
            workers: std::thread::available_parallelism().map_or(4, |n| n.get().min(8)),
            agg_budget: DEFAULT_AGG_BUDGET,
            aqe_config: AqeConfig::default(),
        }
    }
}

impl EngineConfig {
    /// Every optimization off: the plan runs as written, tuple by tuple.
    pub fn naive() -> Self {
        EngineConfig {
            batching: false,
            fusion: false,
            aqe: false,
            ..EngineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_capacity == 0 {
            return Err(Error::Config("chunk capacity must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.aqe_config.validate()
    }
}

/// Shared state of one query execution.
pub struct ExecContext<'a> {
    pub catalog: &'a Catalog,
    pub gateway: &'a Gateway,
    pub config: &'a EngineConfig,
    traces: Mutex<Vec<AqeTrace>>,
}

impl<'a> ExecContext<'a> {
    pub fn new(catalog: &'a Catalog, gateway: &'a Gateway, config: &'a EngineConfig) -> Self {
        ExecContext {
            catalog,
            gateway,
            config,
            traces: Mutex::new(Vec::new()),
        }
    }

    pub fn sem<'b>(&'b self, label: &'b str) -> SemCtx<'b> {
        SemCtx::new(self.gateway)
            .with_workers(self.config.workers)
            .with_label(label)
    }

    pub(crate) fn push_trace(&self, t: AqeTrace) {
        self.traces.lock().push(t);
    }
}

#[derive(Debug)]
pub struct QueryResult {
    pub table: Table,
    pub metrics: MetricsNode,
    /// Model usage of this execution, from the gateway's counters.
    pub usage: UsageSnapshot,
    pub aqe_traces: Vec<AqeTrace>,
    pub wall: Duration,
}

impl QueryResult {
    pub fn llm_calls(&self) -> u64 {
        self.usage.calls
    }
}

/// Runs a physical plan to completion.
pub fn execute(
    plan: &PlanNode,
    catalog: &Catalog,
    gateway: &Gateway,
    config: &EngineConfig,
) -> Result<QueryResult> {
    config.validate()?;
    let started = std::time::Instant::now();
    let before = gateway.snapshot();
    let cx = ExecContext::new(catalog, gateway, config);
    let mut counter = 0;
    let (mut root, handle) = operators::build(plan, &cx, &mut counter)?;
    let mut chunks: Vec<Chunk> = Vec::new();
    while let Some(c) = root.next(&cx)? {
        chunks.push(c);
    }
    let table = Table::from_chunks("result", plan.schema.clone(), &chunks);
    Ok(QueryResult {
        table,
        metrics: handle.snapshot(),
        usage: gateway.snapshot().since(&before),
        aqe_traces: cx.traces.into_inner(),
        wall: started.elapsed(),
    })
}
