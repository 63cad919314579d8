use std::ops::AddAssign;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use crate::llm::{LlmError, LlmResponse, TokenUsage};

/// Model usage of one piece of work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CallStats {
    /// Upstream calls; cache hits are counted separately.
    pub calls: u64,
    pub cache_hits: u64,
    pub usage: TokenUsage,
    #[serde(skip)]
    pub latency: Duration,
    /// Batches re-evaluated tuple by tuple.
    pub fallbacks: u64,
    /// Responses that failed validation.
    pub malformed: u64,
}

impl CallStats {
    pub fn record(&mut self, resp: &LlmResponse) {
        if resp.from_cache {
            self.cache_hits += 1;
        } else {
            self.calls += 1;
            self.usage += resp.usage;
            self.latency += resp.latency;
        }
    }

    /// Accounts a malformed reply; other errors are not charged.
    pub fn record_error(&mut self, e: &LlmError) {
        if let LlmError::Malformed { usage, latency, .. } = e {
            self.calls += 1;
            self.usage += *usage;
            self.latency += *latency;
            self.malformed += 1;
        }
    }
}

impl AddAssign for CallStats {
    fn add_assign(&mut self, o: CallStats) {
        self.calls += o.calls;
        self.cache_hits += o.cache_hits;
        self.usage += o.usage;
        self.latency += o.latency;
        self.fallbacks += o.fallbacks;
        self.malformed += o.malformed;
    }
}

/// Live counters of one operator, shared by its workers.
#[derive(Debug, Default)]
pub struct OpMetrics {
    calls: AtomicU64,
    cache_hits: AtomicU64,
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
    llm_latency_ns: AtomicU64,
    wall_ns: AtomicU64,
    rows_out: AtomicU64,
    fallbacks: AtomicU64,
    malformed: AtomicU64,
}

impl OpMetrics {
    pub fn add_calls(&self, s: &CallStats) {
        self.calls.fetch_add(s.calls, Ordering::Relaxed);
        self.cache_hits.fetch_add(s.cache_hits, Ordering::Relaxed);
        self.input_tokens.fetch_add(s.usage.input_tokens, Ordering::Relaxed);
        self.output_tokens.fetch_add(s.usage.output_tokens, Ordering::Relaxed);
        self.llm_latency_ns
            .fetch_add(s.latency.as_nanos() as u64, Ordering::Relaxed);
        self.fallbacks.fetch_add(s.fallbacks, Ordering::Relaxed);
        self.malformed.fetch_add(s.malformed, Ordering::Relaxed);
    }

    pub fn add_wall(&self, d: Duration) {
        self.wall_ns.fetch_add(d.as_nanos() as u64, Ordering::Relaxed);
    }

    pub fn add_rows_out(&self, n: usize) {
        self.rows_out.fetch_add(n as u64, Ordering::Relaxed);
    }

    pub fn calls(&self) -> CallStats {
        CallStats {
            calls: self.calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            usage: TokenUsage::new(
                self.input_tokens.load(Ordering::Relaxed),
                self.output_tokens.load(Ordering::Relaxed),
            ),
            latency: Duration::from_nanos(self.llm_latency_ns.load(Ordering::Relaxed)),
            fallbacks: self.fallbacks.load(Ordering::Relaxed),
            malformed: self.malformed.load(Ordering::Relaxed),
        }
    }
}

/// Operator handle tree built alongside the operator tree.
#[derive(Debug)]
pub struct MetricsHandle {
    pub operator: String,
    pub detail: String,
    pub metrics: Arc<OpMetrics>,
    pub children: Vec<MetricsHandle>,
}

impl MetricsHandle {
    pub fn snapshot(&self) -> MetricsNode {
        let c = self.metrics.calls();
        let m = &self.metrics;
        let children: Vec<MetricsNode> = self.children.iter().map(MetricsHandle::snapshot).collect();
        let rows_out = m.rows_out.load(Ordering::Relaxed);
        let rows_in = if children.is_empty() {
            rows_out
        } else {
            children.iter().map(|c| c.rows_out).sum()
        };
        MetricsNode {
            operator: self.operator.clone(),
            detail: self.detail.clone(),
            llm_calls: c.calls,
            cache_hits: c.cache_hits,
            input_tokens: c.usage.input_tokens,
            output_tokens: c.usage.output_tokens,
            llm_latency_ms: c.latency.as_secs_f64() * 1e3,
            wall_ms: m.wall_ns.load(Ordering::Relaxed) as f64 / 1e6,
            rows_in,
            rows_out,
            fallbacks: c.fallbacks,
            malformed: c.malformed,
            children,
        }
    }
}

/// Per-operator metrics, mirroring the plan tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsNode {
    pub operator: String,
    pub detail: String,
    pub llm_calls: u64,
    pub cache_hits: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Sum of model-call latencies.
    pub llm_latency_ms: f64,
    /// Time spent producing this operator's output, children included.
    pub wall_ms: f64,
    /// Rows pulled from the children; a scan's own output.
    pub rows_in: u64,
    pub rows_out: u64,
    pub fallbacks: u64,
    pub malformed: u64,
    pub children: Vec<MetricsNode>,
}

impl MetricsNode {
    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a MetricsNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn total_calls(&self) -> u64 {
        let mut n = 0;
        self.walk(&mut |m| n += m.llm_calls);
        n
    }

    pub fn find(&self, operator: &str) -> Option<&MetricsNode> {
        let mut hit = None;
        self.walk(&mut |m| {
            if hit.is_none() && m.operator == operator {
                hit = Some(m);
            }
        });
        hit
    }
}
