use std::time::{Duration, Instant};

use serde::Serialize;

use crate::catalog::Chunk;
use crate::engine::{eval_fused, eval_sem_filter, fuse_filters, CallStats, SemCtx};
use crate::llm::TokenUsage;
use crate::sql::{EvalMode, NlExpr};
use crate::Result;

use super::stats::FilterStats;
use super::{AccuracyMetric, AqeConfig, LatencyMeasure};

/// One evaluation step of a path. Indices refer to the filter list in
/// the user's order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Single(usize),
    /// Both filters in one call; the first is evaluated first.
    Fused(usize, usize),
}

impl Step {
    pub fn selectivity(&self, s: &[f64]) -> f64 {
        match *self {
            Step::Single(i) => s[i],
            Step::Fused(i, j) => s[i].min(s[j]),
        }
    }

    fn lead(&self) -> usize {
        match *self {
            Step::Single(i) => i,
            Step::Fused(i, j) => i.min(j),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Step::Single(i) => format!("σ{}", i + 1),
            Step::Fused(i, j) => format!("σ{}⊕σ{}", i + 1, j + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Reference,
    Base,
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionPath {
    pub label: String,
    pub kind: PathKind,
    pub steps: Vec<Step>,
    pub batched: bool,
}

impl ExecutionPath {
    pub fn describe(&self) -> String {
        let s: Vec<String> = self.steps.iter().map(Step::describe).collect();
        format!("[{}]{}", s.join(", "), if self.batched { " batched" } else { "" })
    }

    fn twin(&self) -> ExecutionPath {
        ExecutionPath {
            label: format!("{}+batch", self.label),
            batched: true,
            ..self.clone()
        }
    }
}

/// Which variants path generation may emit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub fusion: bool,
    pub batching: bool,
    pub mcc_threshold: f64,
}

fn sort_steps(steps: &mut [Step], s: &[f64]) {
    steps.sort_by(|a, b| {
        a.selectivity(s)
            .total_cmp(&b.selectivity(s))
            .then(a.lead().cmp(&b.lead()))
    });
}

/// Candidate paths: the reference (user order), the base (ascending
/// selectivity), one fused variant per sufficiently correlated pair, and a
/// batched twin of each. Unbatched paths come first.
pub fn generate_paths(n: usize, stats: &FilterStats, opts: &PathOptions) -> Vec<ExecutionPath> {
    let s = &stats.selectivity;
    let reference: Vec<Step> = (0..n).map(Step::Single).collect();
    let mut base = reference.clone();
    sort_steps(&mut base, s);
    let mut paths = vec![ExecutionPath {
        label: "p_ref".into(),
        kind: PathKind::Reference,
        steps: reference.clone(),
        batched: false,
    }];
    if base != reference {
        paths.push(ExecutionPath {
            label: "p_base".into(),
            kind: PathKind::Base,
            steps: base,
            batched: false,
        });
    }
    if opts.fusion {
        for p in &stats.pairs {
            if p.mcc <= opts.mcc_threshold {
                continue;
            }
            let (first, second) = if s[p.j] < s[p.i] { (p.j, p.i) } else { (p.i, p.j) };
            let mut steps: Vec<Step> = (0..n)
                .filter(|&k| k != p.i && k != p.j)
                .map(Step::Single)
                .collect();
            steps.push(Step::Fused(first, second));
            sort_steps(&mut steps, s);
            paths.push(ExecutionPath {
                label: format!("p_fused[{}+{}]", p.i + 1, p.j + 1),
                kind: PathKind::Fused,
                steps,
                batched: false,
            });
        }
    }
    if opts.batching {
        let twins: Vec<ExecutionPath> = paths.iter().map(ExecutionPath::twin).collect();
        paths.extend(twins);
    }
    paths
}

/// Runs a path over `rows`; each step sees only the survivors of the
/// previous ones.
pub fn run_path(
    ctx: &SemCtx,
    filters: &[NlExpr],
    stats: &FilterStats,
    path: &ExecutionPath,
    rows: &Chunk,
    batch_size: usize,
) -> Result<(Vec<bool>, CallStats)> {
    let mode = if path.batched {
        EvalMode::Batched(batch_size.max(1))
    } else {
        EvalMode::PerTuple
    };
    let mut alive: Vec<usize> = (0..rows.len()).collect();
    let mut total = CallStats::default();
    for step in &path.steps {
        if alive.is_empty() {
            break;
        }
        let sub = rows.take(&alive);
        let verdicts = match *step {
            Step::Single(i) => {
                let (v, s) = eval_sem_filter(ctx, &sub, &filters[i], mode)?;
                total += s;
                v
            }
            Step::Fused(i, j) => {
                let est = stats.selectivity.get(i).zip(stats.selectivity.get(j)).map(|(a, b)| a.min(*b));
                let node = fuse_filters(&filters[i], &filters[j], est);
                let (v, s) = eval_fused(ctx, &sub, &node, mode)?;
                total += s;
                v.into_iter().map(|(a, b)| a.is_true() && b.is_true()).collect()
            }
        };
        alive = alive
            .into_iter()
            .zip(verdicts)
            .filter_map(|(r, keep)| keep.then_some(r))
            .collect();
    }
    let mut mask = vec![false; rows.len()];
    for r in alive {
        mask[r] = true;
    }
    Ok((mask, total))
}

/// Agreement of a selection with the reference selection.
pub fn accuracy(metric: AccuracyMetric, predicted: &[bool], reference: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut same = 0usize;
    for (&p, &r) in predicted.iter().zip(reference) {
        same += usize::from(p == r);
        match (p, r) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    match metric {
        AccuracyMetric::Accuracy if predicted.is_empty() => 1.0,
        AccuracyMetric::Accuracy => same as f64 / predicted.len() as f64,
        // Both selections empty: nothing to disagree on.
        AccuracyMetric::F1 if tp + fp + fn_ == 0 => 1.0,
        AccuracyMetric::F1 => 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMetrics {
    pub latency_ms: f64,
    pub usage: TokenUsage,
    pub cost: f64,
    pub calls: u64,
    pub accuracy: f64,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub path: ExecutionPath,
    pub metrics: Option<PathMetrics>,
    /// Why the path was not evaluated.
    pub skipped: Option<String>,
    pub passed: bool,
}

/// Micro-executes candidates on the exploration rows. The unbatched
/// reference runs first and its selection is the proxy truth, returned
/// alongside the candidates.
pub fn explore_paths(
    ctx: &SemCtx,
    filters: &[NlExpr],
    stats: &FilterStats,
    paths: &[ExecutionPath],
    rows: &Chunk,
    cfg: &AqeConfig,
    batch_size: usize,
) -> Result<(Vec<Candidate>, Vec<bool>, CallStats)> {
    let spent = std::cell::Cell::new(CallStats::default());
    let measure = |path: &ExecutionPath| -> Result<(Vec<bool>, CallStats, Duration)> {
        let started = Instant::now();
        // Tag the calls with the path so the trace shows what was explored.
        let label = format!("{}/{}", ctx.label, path.label);
        let tagged = SemCtx { label: &label, ..*ctx };
        let (mask, s) = run_path(&tagged, filters, stats, path, rows, batch_size)?;
        let mut t = spent.get();
        t += s;
        spent.set(t);
        Ok((mask, s, started.elapsed()))
    };
    let metrics = |mask: &[bool], s: &CallStats, wall: Duration, truth: &[bool]| PathMetrics {
        latency_ms: match cfg.latency {
            LatencyMeasure::CallSum => s.latency.as_secs_f64() * 1e3,
            LatencyMeasure::WallClock => wall.as_secs_f64() * 1e3,
        },
        usage: s.usage,
        cost: ctx.gateway.cost(s.usage),
        calls: s.calls,
        accuracy: accuracy(cfg.accuracy, mask, truth),
        selected: mask.iter().filter(|b| **b).count(),
    };

    let mut out: Vec<Candidate> = paths
        .iter()
        .map(|p| Candidate {
            path: p.clone(),
            metrics: None,
            skipped: None,
            passed: false,
        })
        .collect();
    let ref_idx = paths
        .iter()
        .position(|p| p.kind == PathKind::Reference && !p.batched)
        .expect("reference path present");
    let (truth, s, wall) = measure(&paths[ref_idx])?;
    out[ref_idx].metrics = Some(metrics(&truth, &s, wall, &truth));
    out[ref_idx].passed = true;

    let twin_of = |i: usize| {
        paths
            .iter()
            .position(|q| q.batched && q.label == format!("{}+batch", paths[i].label))
    };
    let mut batched_ok = true;
    let run = |i: usize, out: &mut Vec<Candidate>| -> Result<bool> {
        let (mask, s, wall) = measure(&paths[i])?;
        let m = metrics(&mask, &s, wall, &truth);
        let passed = m.accuracy >= cfg.acc_threshold;
        out[i].metrics = Some(m);
        out[i].passed = passed;
        Ok(passed)
    };
    if let Some(t) = twin_of(ref_idx) {
        batched_ok = run(t, &mut out)?;
    }
    for i in 0..paths.len() {
        if i == ref_idx || paths[i].batched {
            continue;
        }
        let passed = run(i, &mut out)?;
        let Some(t) = twin_of(i) else { continue };
        if !batched_ok {
            out[t].skipped = Some("reference batched path missed the accuracy threshold".into());
        } else if !passed && paths[i].kind == PathKind::Fused {
            out[t].skipped = Some("unbatched fused path missed the accuracy threshold".into());
        } else {
            run(t, &mut out)?;
        }
    }
    // Batched paths without an unbatched original (none are generated,
    // but keep the set complete).
    for i in 0..paths.len() {
        if out[i].metrics.is_none() && out[i].skipped.is_none() {
            if batched_ok {
                run(i, &mut out)?;
            } else {
                out[i].skipped = Some("reference batched path missed the accuracy threshold".into());
            }
        }
    }
    Ok((out, truth, spent.get()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(sel: &[f64], pairs: &[(usize, usize, f64)]) -> FilterStats {
        FilterStats {
            selectivity: sel.to_vec(),
            results: vec![],
            pairs: pairs
                .iter()
                .map(|&(i, j, mcc)| super::super::stats::PairCorrelation { i, j, mcc })
                .collect(),
        }
    }

    const ALL: PathOptions = PathOptions {
        fusion: true,
        batching: true,
        mcc_threshold: 0.5,
    };

    #[test]
    fn case_study_candidates() {
        let st = stats(&[0.66, 0.77, 0.22], &[(0, 1, 0.75), (0, 2, 0.3), (1, 2, 0.2)]);
        let paths = generate_paths(3, &st, &ALL);
        let labels: Vec<&str> = paths.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(
            labels,
            ["p_ref", "p_base", "p_fused[1+2]", "p_ref+batch", "p_base+batch", "p_fused[1+2]+batch"]
        );
        assert_eq!(paths[1].steps, [Step::Single(2), Step::Single(0), Step::Single(1)]);
        assert_eq!(paths[2].steps, [Step::Single(2), Step::Fused(0, 1)]);
    }

    #[test]
    fn every_correlated_pair_yields_a_variant() {
        let pairs: Vec<(usize, usize, f64)> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j, 0.9)))
            .collect();
        let st = stats(&[0.1, 0.2, 0.3, 0.4], &pairs);
        let paths = generate_paths(4, &st, &ALL);
        assert_eq!(paths.iter().filter(|p| p.kind == PathKind::Fused && !p.batched).count(), 6);
        for p in &paths {
            let mut seen: Vec<usize> = p
                .steps
                .iter()
                .flat_map(|s| match *s {
                    Step::Single(i) => vec![i],
                    Step::Fused(i, j) => vec![i, j],
                })
                .collect();
            seen.sort();
            assert_eq!(seen, [0, 1, 2, 3]);
        }
    }

    #[test]
    fn single_filter_paths() {
        let st = stats(&[0.4], &[]);
        let paths = generate_paths(1, &st, &ALL);
        assert_eq!(paths.len(), 2);
        assert!(paths[1].batched);
    }

    #[test]
    fn accuracy_conventions() {
        assert_eq!(accuracy(AccuracyMetric::F1, &[false, false], &[false, false]), 1.0);
        assert_eq!(accuracy(AccuracyMetric::F1, &[true, false], &[false, true]), 0.0);
        assert_eq!(accuracy(AccuracyMetric::Accuracy, &[true, false], &[true, true]), 0.5);
    }
}
