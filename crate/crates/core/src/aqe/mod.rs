//! Adaptive execution of a run of semantic filters in three phases:
//! statistics on a small prefix, micro-execution of candidate paths on the
//! next rows, and the chosen path on the rest.

mod pareto;
mod paths;
mod stats;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::catalog::Chunk;
use crate::engine::{CallStats, SemCtx};
use crate::sql::NlExpr;
use crate::{Error, Result};

pub use pareto::{pareto_frontier, select_path, Objective};
pub use paths::{
    accuracy, explore_paths, generate_paths, run_path, Candidate, ExecutionPath, PathKind,
    PathMetrics, PathOptions, Step,
};
pub use stats::{collect_filter_stats, mcc, FilterStats, PairCorrelation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    #[default]
    F1,
    Accuracy,
}

/// How path latency is measured during exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMeasure {
    /// Sum of per-call latencies reported by the gateway. Deterministic
    /// under the mock provider.
    #[default]
    CallSum,
    /// Elapsed time of the whole path.
    WallClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AqeConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub mcc_threshold: f64,
    pub acc_threshold: f64,
    pub objective: Objective,
    pub accuracy: AccuracyMetric,
    pub latency: LatencyMeasure,
}

impl Default for AqeConfig {
    fn default() -> Self {
        AqeConfig {
            delta1: 1.0 / 32.0,
            delta2: 3.0 / 32.0,
            mcc_threshold: 0.5,
            acc_threshold: 0.80,
            objective: Objective::Latency,
            accuracy: AccuracyMetric::F1,
            latency: LatencyMeasure::CallSum,
        }
    }
}

impl AqeConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| x > 0.0 && x < 1.0;
        if !frac(self.delta1) || !frac(self.delta2) || self.delta1 + self.delta2 > 1.0 {
            return Err(Error::Config(format!(
                "delta1 and delta2 must lie in (0, 1) with delta1 + delta2 <= 1, got {} and {}",
                self.delta1, self.delta2
            )));
        }
        if !(-1.0..=1.0).contains(&self.mcc_threshold) {
            return Err(Error::Config(format!("mcc threshold {} is outside [-1, 1]", self.mcc_threshold)));
        }
        if !(0.0..=1.0).contains(&self.acc_threshold) {
            return Err(Error::Config(format!("accuracy threshold {} is outside [0, 1]", self.acc_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTrace {
    pub phase: u8,
    /// Input row range `[start, end)`.
    pub rows: (usize, usize),
    pub chunks: usize,
    pub llm_calls: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AqeTrace {
    pub filters: Vec<String>,
    pub total_rows: usize,
    pub chunk_capacity: usize,
    /// Nominal phase limits before rounding up to chunk boundaries.
    pub limits: (f64, f64),
    pub phases: Vec<PhaseTrace>,
    pub stats: Option<FilterStats>,
    pub candidates: Vec<Candidate>,
    /// Labels of the accuracy-passing, non-dominated candidates.
    pub frontier: Vec<String>,
    pub objective: Objective,
    pub chosen: Option<String>,
    pub chosen_steps: Option<String>,
}

impl AqeTrace {
    pub fn phase_rows(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for p in &self.phases {
            out[usize::from(p.phase - 1)] = p.rows.1 - p.rows.0;
        }
        out
    }
}

/// Settings from the engine that adaptive execution also honours.
#[derive(Debug, Clone, Copy)]
pub struct AqeRun<'a> {
    pub cfg: &'a AqeConfig,
    pub chunk_capacity: usize,
    pub batch_size: usize,
    pub fusion: bool,
    pub batching: bool,
}

/// Selects the rows of `input` passing every filter. A chunk belongs to
/// phase 1 while fewer than δ₁·n rows precede it, to phase 2 while fewer
/// than (δ₁+δ₂)·n do, and to phase 3 after that.
pub fn run_aqe(
    ctx: &SemCtx,
    filters: &[NlExpr],
    input: &Chunk,
    run: &AqeRun,
) -> Result<(Vec<bool>, AqeTrace, CallStats)> {
    run.cfg.validate()?;
    let n = input.len();
    let chunks = input.split(run.chunk_capacity, 0);
    let lim1 = run.cfg.delta1 * n as f64;
    let lim2 = (run.cfg.delta1 + run.cfg.delta2) * n as f64;
    let mut groups: [Vec<Chunk>; 3] = Default::default();
    let mut seen = 0usize;
    for c in chunks {
        let phase = if (seen as f64) < lim1 {
            0
        } else if (seen as f64) < lim2 {
            1
        } else {
            2
        };
        seen += c.len();
        groups[phase].push(c);
    }
    let rows_of = |g: &[Chunk]| g.iter().map(Chunk::len).sum::<usize>();
    let (n1, n2) = (rows_of(&groups[0]), rows_of(&groups[1]));
    let schema = input.schema.clone();
    let mut total = CallStats::default();
    let mut mask = Vec::with_capacity(n);
    let mut trace = AqeTrace {
        filters: filters.iter().map(|f| f.template.clone()).collect(),
        total_rows: n,
        chunk_capacity: run.chunk_capacity,
        limits: (lim1, lim2),
        phases: Vec::new(),
        stats: None,
        candidates: Vec::new(),
        frontier: Vec::new(),
        objective: run.cfg.objective,
        chosen: None,
        chosen_steps: None,
    };
    if n == 0 {
        return Ok((mask, trace, total));
    }

    // Phase 1: every filter on every sampled row.
    let started = Instant::now();
    let sample = Chunk::concat(schema.clone(), &groups[0]);
    let (stats, s1) = collect_filter_stats(ctx, filters, &sample)?;
    mask.extend(stats.conjunction(sample.len()));
    total += s1;
    trace.phases.push(PhaseTrace {
        phase: 1,
        rows: (0, n1),
        chunks: groups[0].len(),
        llm_calls: s1.calls,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });

    // Phase 2: candidate paths on the next rows.
    let started = Instant::now();
    let opts = PathOptions {
        fusion: run.fusion,
        batching: run.batching,
        mcc_threshold: run.cfg.mcc_threshold,
    };
    let paths = generate_paths(filters.len(), &stats, &opts);
    let mut s2 = CallStats::default();
    let chosen_path = if n2 == 0 {
        // Nothing to explore on; fall back to the statistics alone.
        trace.candidates = paths
            .iter()
            .map(|p| Candidate {
                path: p.clone(),
                metrics: None,
                skipped: Some("no exploration rows".into()),
                passed: false,
            })
            .collect();
        paths
            .iter()
            .find(|p| p.kind == PathKind::Base && !p.batched)
            .unwrap_or(&paths[0])
            .clone()
    } else {
        let explore = Chunk::concat(schema.clone(), &groups[1]);
        let (cands, truth, spent) =
            explore_paths(ctx, filters, &stats, &paths, &explore, run.cfg, run.batch_size)?;
        mask.extend(truth);
        s2 = spent;
        let (chosen, frontier) = select_path(&cands, run.cfg.objective).expect("reference path always passes");
        trace.frontier = frontier.iter().map(|&i| cands[i].path.label.clone()).collect();
        let path = cands[chosen].path.clone();
        trace.candidates = cands;
        path
    };
    total += s2;
    trace.phases.push(PhaseTrace {
        phase: 2,
        rows: (n1, n1 + n2),
        chunks: groups[1].len(),
        llm_calls: s2.calls,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });
    trace.chosen = Some(chosen_path.label.clone());
    trace.chosen_steps = Some(chosen_path.describe());

    // Phase 3: the chosen path, chunk by chunk.
    let started = Instant::now();
    let mut s3 = CallStats::default();
    for c in &groups[2] {
        let (m, s) = run_path(ctx, filters, &stats, &chosen_path, c, run.batch_size)?;
        mask.extend(m);
        s3 += s;
    }
    total += s3;
    trace.phases.push(PhaseTrace {
        phase: 3,
        rows: (n1 + n2, n),
        chunks: groups[2].len(),
        llm_calls: s3.calls,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });
    trace.stats = Some(stats);
    Ok((mask, trace, total))
}
