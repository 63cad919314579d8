//! Reference algorithms of the semantic operators.

use crate::catalog::Chunk;
use crate::llm::{
    Gateway, Item, LlmError, Parsed, ResponseFormat, Scalar, Task, TaskItem, TaskKind, TaskStep,
};
use crate::sql::{FusedNode, NlExpr, StepKind};
use crate::value::Value;
use crate::{Error, Result};

use super::eval::{eval, ChunkRow, Compiled, PairRow, RowRef};
use super::metrics::CallStats;
use super::parallel::parallel_map;
use super::prompts::{self, Bindings};
use crate::sql::EvalMode;

/// What a semantic evaluator needs to issue calls.
#[derive(Clone, Copy)]
pub struct SemCtx<'a> {
    pub gateway: &'a Gateway,
    pub workers: usize,
    /// Issuer tag recorded in the call trace.
    pub label: &'a str,
}

impl<'a> SemCtx<'a> {
    pub fn new(gateway: &'a Gateway) -> Self {
        SemCtx {
            gateway,
            workers: 1,
            label: "",
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_label(mut self, label: &'a str) -> Self {
        self.label = label;
        self
    }
}

/// One tuple (or pair) ready for prompting.
#[derive(Debug, Clone)]
struct Prompted {
    text: String,
    item: TaskItem,
}

struct Spec<'s> {
    kind: TaskKind,
    template: &'s str,
    fused: Option<(TaskStep, TaskStep)>,
    system: &'static str,
    batch_system: &'static str,
    user: fn(&str) -> String,
    batch_user: fn(&[String]) -> String,
    format: ResponseFormat,
    item: Item,
}

impl Spec<'_> {
    fn task(&self, items: Vec<TaskItem>) -> Task {
        let mut t = Task::new(self.kind, self.template).with_items(items);
        t.fused = self.fused.clone();
        t
    }
}

fn as_parsed(resp_parsed: Option<Parsed>, text: &str) -> Parsed {
    resp_parsed.unwrap_or_else(|| Parsed::Text(text.trim().to_string()))
}

fn run_single<T>(
    ctx: &SemCtx,
    spec: &Spec,
    p: &Prompted,
    decode: &(dyn Fn(&Parsed) -> Option<T> + Sync),
    default: &(dyn Fn() -> T + Sync),
    stats: &mut CallStats,
) -> Result<T> {
    let req = ctx
        .gateway
        .request(spec.system, (spec.user)(&p.text), spec.format)
        .with_task(spec.task(vec![p.item.clone()]))
        .with_label(ctx.label);
    match ctx.gateway.complete(&req) {
        Ok(resp) => {
            stats.record(&resp);
            match decode(&as_parsed(resp.parsed, &resp.text)) {
                Some(v) => Ok(v),
                None => {
                    stats.malformed += 1;
                    Ok(default())
                }
            }
        }
        Err(e @ LlmError::Malformed { .. }) => {
            log::debug!("{}: {e}", ctx.label);
            stats.record_error(&e);
            Ok(default())
        }
        Err(e) => Err(e.into()),
    }
}

fn run_batch<T>(
    ctx: &SemCtx,
    spec: &Spec,
    ps: &[Prompted],
    decode: &(dyn Fn(&Parsed) -> Option<T> + Sync),
    default: &(dyn Fn() -> T + Sync),
    stats: &mut CallStats,
) -> Result<Vec<T>> {
    let texts: Vec<String> = ps.iter().map(|p| p.text.clone()).collect();
    let req = ctx
        .gateway
        .request(
            spec.batch_system,
            (spec.batch_user)(&texts),
            ResponseFormat::JsonArray {
                len: ps.len(),
                item: spec.item,
            },
        )
        .with_task(spec.task(ps.iter().map(|p| p.item.clone()).collect()))
        .with_label(ctx.label);
    match ctx.gateway.complete(&req) {
        Ok(resp) => {
            stats.record(&resp);
            if let Some(Parsed::List(items)) = resp.parsed {
                let decoded: Option<Vec<T>> = items.iter().map(decode).collect();
                if let Some(v) = decoded.filter(|v| v.len() == ps.len()) {
                    return Ok(v);
                }
            }
            stats.malformed += 1;
        }
        Err(e @ LlmError::Malformed { .. }) => {
            log::debug!("{}: batch of {} rejected: {e}", ctx.label, ps.len());
            stats.record_error(&e);
        }
        Err(e) => return Err(e.into()),
    }
    stats.fallbacks += 1;
    ps.iter()
        .map(|p| run_single(ctx, spec, p, decode, default, stats))
        .collect()
}

/// Evaluates every item, one call per item or one per batch of `k`.
fn run_items<T: Send>(
    ctx: &SemCtx,
    spec: &Spec,
    items: &[Prompted],
    mode: EvalMode,
    decode: &(dyn Fn(&Parsed) -> Option<T> + Sync),
    default: &(dyn Fn() -> T + Sync),
) -> Result<(Vec<T>, CallStats)> {
    let size = match mode {
        EvalMode::PerTuple => 1,
        EvalMode::Batched(k) => k.max(1),
    };
    let units: Vec<&[Prompted]> = items.chunks(size).collect();
    let done = parallel_map(ctx.workers, units.len(), |u| {
        let mut stats = CallStats::default();
        let out = match mode {
            EvalMode::PerTuple => vec![run_single(ctx, spec, &units[u][0], decode, default, &mut stats)?],
            EvalMode::Batched(_) => run_batch(ctx, spec, units[u], decode, default, &mut stats)?,
        };
        Ok::<_, Error>((out, stats))
    })?;
    let mut stats = CallStats::default();
    let mut out = Vec::with_capacity(items.len());
    for (v, s) in done {
        out.extend(v);
        stats += s;
    }
    Ok((out, stats))
}

fn check_bound(node: &str, b: &Bindings, allowed: &[&str]) -> Result<()> {
    if let Some(c) = b
        .missing()
        .into_iter()
        .find(|c| !allowed.iter().any(|a| c.table_alias.is_none() && c.column.eq_ignore_ascii_case(a)))
    {
        return Err(Error::execution(node, format!("column {c} is not available to the expression")));
    }
    Ok(())
}

fn decode_bool(p: &Parsed) -> Option<bool> {
    p.as_bool()
}

fn decode_text(p: &Parsed) -> Option<Value> {
    p.as_text().map(|s| Value::Text(s.to_string()))
}

fn filter_spec(template: &str) -> Spec<'_> {
    Spec {
        kind: TaskKind::Filter,
        template,
        fused: None,
        system: prompts::FILTER_SYSTEM,
        batch_system: prompts::FILTER_BATCH_SYSTEM,
        user: prompts::filter_user,
        batch_user: prompts::filter_batch_user,
        format: ResponseFormat::JsonBool,
        item: Item::Scalar(Scalar::Bool),
    }
}

fn unary_items(chunk: &Chunk, exprs: &[&NlExpr], render: &dyn Fn(&Bindings, &dyn RowRef) -> String) -> (Bindings, Vec<Prompted>) {
    let b = Bindings::new(exprs, &chunk.schema);
    let items = (0..chunk.len())
        .map(|i| {
            let row = ChunkRow(chunk, i);
            Prompted {
                text: render(&b, &row),
                item: TaskItem {
                    fields: b.fields(&chunk.schema, &row, |_| true),
                    right: None,
                },
            }
        })
        .collect();
    (b, items)
}

/// Verdict per row: one call per row, or one per batch.
pub fn eval_sem_filter(
    ctx: &SemCtx,
    chunk: &Chunk,
    expr: &NlExpr,
    mode: EvalMode,
) -> Result<(Vec<bool>, CallStats)> {
    let (b, items) = unary_items(chunk, &[expr], &|b, row| b.render(expr, row, ""));
    check_bound("SemFilter", &b, &[])?;
    // An unreadable verdict rejects the row.
    run_items(ctx, &filter_spec(&expr.template), &items, mode, &decode_bool, &|| false)
}

/// One generated text per row.
pub fn eval_sem_proj(
    ctx: &SemCtx,
    chunk: &Chunk,
    expr: &NlExpr,
    mode: EvalMode,
) -> Result<(Vec<Value>, CallStats)> {
    let (b, items) = unary_items(chunk, &[expr], &|b, row| b.render(expr, row, ""));
    check_bound("SemProj", &b, &[])?;
    let spec = Spec {
        kind: TaskKind::Proj,
        template: &expr.template,
        fused: None,
        system: prompts::PROJ_SYSTEM,
        batch_system: prompts::PROJ_BATCH_SYSTEM,
        user: prompts::proj_user,
        batch_user: prompts::proj_batch_user,
        format: ResponseFormat::FreeText,
        item: Item::Scalar(Scalar::Text),
    };
    run_items(ctx, &spec, &items, mode, &decode_text, &|| Value::Null)
}

/// Nested-loop join: every pair passing `condition` goes to the model.
/// Returns matching `(left, right)` row pairs in left-major order.
pub fn eval_sem_join(
    ctx: &SemCtx,
    left: &Chunk,
    right: &Chunk,
    expr: &NlExpr,
    condition: Option<&Compiled>,
    mode: EvalMode,
) -> Result<(Vec<(usize, usize)>, CallStats)> {
    let schema = left.schema.join(&right.schema);
    let b = Bindings::new(&[expr], &schema);
    check_bound("SemJoin", &b, &[])?;
    let nl = left.columns.len();
    let mut pairs = Vec::new();
    let mut items = Vec::new();
    for l in 0..left.len() {
        for r in 0..right.len() {
            let row = PairRow { left, l, right, r };
            if let Some(c) = condition {
                if !eval(c, &row).is_true() {
                    continue;
                }
            }
            pairs.push((l, r));
            items.push(Prompted {
                text: b.render(expr, &row, ""),
                item: TaskItem {
                    fields: b.fields(&schema, &row, |i| i < nl),
                    right: Some(b.fields(&schema, &row, |i| i >= nl)),
                },
            });
        }
    }
    let spec = Spec {
        kind: TaskKind::Join,
        template: &expr.template,
        fused: None,
        system: prompts::JOIN_SYSTEM,
        batch_system: prompts::JOIN_BATCH_SYSTEM,
        user: prompts::filter_user,
        batch_user: prompts::filter_batch_user,
        format: ResponseFormat::JsonBool,
        item: Item::Scalar(Scalar::Bool),
    };
    let (verdicts, stats) = run_items(ctx, &spec, &items, mode, &decode_bool, &|| false)?;
    let matched = pairs
        .into_iter()
        .zip(verdicts)
        .filter_map(|(p, v)| v.then_some(p))
        .collect();
    Ok((matched, stats))
}

/// Selection sort with the model as comparator: n(n-1)/2 calls. The
/// current pick is replaced only when the model says it does not precede
/// the candidate, so equal rows keep their input order.
pub fn eval_sem_orderby(
    ctx: &SemCtx,
    chunk: &Chunk,
    expr: &NlExpr,
    descending: bool,
) -> Result<(Vec<usize>, CallStats)> {
    let b = Bindings::new(&[expr], &chunk.schema);
    check_bound("SemOrderBy", &b, &[])?;
    let criterion = prompts::instruction(expr);
    let describe: Vec<String> = (0..chunk.len()).map(|i| b.describe(&ChunkRow(chunk, i))).collect();
    let fields: Vec<_> = (0..chunk.len())
        .map(|i| b.fields(&chunk.schema, &ChunkRow(chunk, i), |_| true))
        .collect();
    let mut stats = CallStats::default();
    let mut precedes = |a: usize, c: usize| -> Result<bool> {
        let task = Task::new(TaskKind::Compare, expr.template.clone()).with_items(vec![TaskItem {
            fields: fields[a].clone(),
            right: Some(fields[c].clone()),
        }]);
        let req = ctx
            .gateway
            .request(
                prompts::COMPARE_SYSTEM,
                prompts::compare_user(&criterion, &describe[a], &describe[c]),
                ResponseFormat::JsonBool,
            )
            .with_task(task)
            .with_label(ctx.label);
        match ctx.gateway.complete(&req) {
            Ok(resp) => {
                stats.record(&resp);
                Ok(resp.parsed.and_then(|p| p.as_bool()).unwrap_or(true))
            }
            Err(e @ LlmError::Malformed { .. }) => {
                stats.record_error(&e);
                Ok(true)
            }
            Err(e) => Err(e.into()),
        }
    };
    let mut remaining: Vec<usize> = (0..chunk.len()).collect();
    let mut order = Vec::with_capacity(remaining.len());
    while remaining.len() > 1 {
        let mut best = 0;
        for cand in 1..remaining.len() {
            if !precedes(remaining[best], remaining[cand])? {
                best = cand;
            }
        }
        order.push(remaining.remove(best));
    }
    order.extend(remaining);
    if descending {
        order.reverse();
    }
    Ok((order, stats))
}

fn digits(n: usize) -> usize {
    n.to_string().len()
}

/// Splits values into consecutive groups whose aggregation prompt fits in
/// `budget` estimated tokens.
fn budget_groups(instruction: &str, values: &[String], budget: u64, what: &str) -> Result<Vec<(usize, usize)>> {
    let sys = crate::llm::estimate_tokens(prompts::AGG_SYSTEM);
    let base = prompts::agg_user(instruction, &[]).chars().count();
    let fits = |chars: usize| sys + (chars as u64).div_ceil(4) <= budget;
    let mut groups = Vec::new();
    let mut start = 0;
    let mut chars = base;
    for (i, v) in values.iter().enumerate() {
        let line = digits(i - start + 1) + 2 + v.chars().count() + 1;
        if fits(chars + line) {
            chars += line;
            continue;
        }
        if i == start {
            return Err(Error::execution(
                "SemAgg",
                format!("{what} {i} alone exceeds the context budget of {budget} tokens"),
            ));
        }
        groups.push((start, i));
        start = i;
        chars = base + 1 + 2 + v.chars().count() + 1;
        if !fits(chars) {
            return Err(Error::execution(
                "SemAgg",
                format!("{what} {i} alone exceeds the context budget of {budget} tokens"),
            ));
        }
    }
    groups.push((start, values.len()));
    Ok(groups)
}

/// Aggregates `values` with one call when the prompt fits the context
/// budget; otherwise aggregates budget-sized groups and then their partial
/// results, recursively. An empty input yields `Null` without a call.
pub fn eval_sem_agg(
    ctx: &SemCtx,
    values: &[String],
    expr: &NlExpr,
    budget: u64,
) -> Result<(Value, CallStats)> {
    let mut stats = CallStats::default();
    if values.is_empty() {
        return Ok((Value::Null, stats));
    }
    let instruction = prompts::instruction(expr);
    let call = |group: &[String]| -> Result<(String, CallStats)> {
        let mut s = CallStats::default();
        let task = Task::new(TaskKind::Agg, expr.template.clone()).with_extra(group.to_vec());
        let req = ctx
            .gateway
            .request(
                prompts::AGG_SYSTEM,
                prompts::agg_user(&instruction, group),
                ResponseFormat::FreeText,
            )
            .with_task(task)
            .with_label(ctx.label);
        let resp = ctx.gateway.complete(&req)?;
        s.record(&resp);
        Ok((resp.text.trim().to_string(), s))
    };
    let mut level: Vec<String> = values.to_vec();
    let mut what = "row";
    loop {
        let groups = budget_groups(&instruction, &level, budget, what)?;
        if groups.len() == 1 {
            let (text, s) = call(&level)?;
            stats += s;
            return Ok((Value::Text(text), stats));
        }
        if groups.len() >= level.len() {
            return Err(Error::execution(
                "SemAgg",
                format!("context budget of {budget} tokens admits only one value per group"),
            ));
        }
        let partial = parallel_map(ctx.workers, groups.len(), |g| {
            let (a, b) = groups[g];
            call(&level[a..b])
        })?;
        level = partial
            .into_iter()
            .map(|(t, s)| {
                stats += s;
                t
            })
            .collect();
        what = "partial result";
    }
}

fn step_kind(k: StepKind) -> TaskKind {
    match k {
        StepKind::Filter => TaskKind::Filter,
        StepKind::Proj => TaskKind::Proj,
    }
}

fn step_scalar(k: StepKind) -> Scalar {
    match k {
        StepKind::Filter => Scalar::Bool,
        StepKind::Proj => Scalar::Text,
    }
}

fn to_value(p: &Parsed, want: StepKind) -> Option<Value> {
    match (p, want) {
        (Parsed::Bool(b), StepKind::Filter) => Some(Value::Bool(*b)),
        (Parsed::Text(s), StepKind::Proj) => Some(Value::Text(s.clone())),
        _ => None,
    }
}

/// Results of both steps for one row. A rejected first filter leaves the
/// second `Null`.
pub type FusedOutput = (Value, Value);

/// One call per row (or batch) answering both steps of a fused node.
pub fn eval_fused(
    ctx: &SemCtx,
    chunk: &Chunk,
    node: &FusedNode,
    mode: EvalMode,
) -> Result<(Vec<FusedOutput>, CallStats)> {
    let (first, second) = (&node.first, &node.second);
    let exprs = [&node.combined, &first.expr, &second.expr];
    let (b, items) = unary_items(chunk, &exprs, &|b, row| {
        let r = |e: &NlExpr| b.render(e, row, prompts::STEP1_RESULT);
        prompts::fused_record(
            &r(&node.combined),
            (first.kind, &r(&first.expr)),
            (second.kind, &r(&second.expr)),
        )
    });
    let alias: Vec<&str> = first.alias.as_deref().into_iter().collect();
    check_bound("Fused", &b, &alias)?;
    let step = |s: &crate::sql::FusedStep| TaskStep {
        kind: step_kind(s.kind),
        template: s.expr.template.clone(),
        alias: s.alias.clone(),
    };
    let (a, c) = (step_scalar(first.kind), step_scalar(second.kind));
    let spec = Spec {
        kind: step_kind(first.kind),
        template: &node.combined.template,
        fused: Some((step(first), step(second))),
        system: prompts::FUSED_SYSTEM,
        batch_system: prompts::FUSED_BATCH_SYSTEM,
        user: |s| s.to_string(),
        batch_user: prompts::fused_batch_user,
        format: ResponseFormat::JsonPair(a, c),
        item: Item::Pair(a, c),
    };
    let decode = |p: &Parsed| -> Option<FusedOutput> {
        let Parsed::Pair(x, y) = p else { return None };
        let x = to_value(x, first.kind)?;
        if first.kind == StepKind::Filter && !x.is_true() {
            return Some((x, Value::Null));
        }
        Some((x, to_value(y, second.kind)?))
    };
    let default = || match first.kind {
        StepKind::Filter => (Value::Bool(false), Value::Null),
        StepKind::Proj => (Value::Null, Value::Null),
    };
    run_items(ctx, &spec, &items, mode, &decode, &default)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Column, Field, Schema};
    use crate::llm::{MockConfig, MockOracle};
    use crate::value::DataType;
    use serde_json::json;
    use std::sync::Arc;

    fn texts(alias: &str, name: &str, vals: &[&str]) -> Chunk {
        let schema = Arc::new(Schema::new(vec![Field::new(Some(alias), name, DataType::Text)]));
        Chunk::new(
            schema,
            vec![Column::new(DataType::Text, vals.iter().map(|v| Value::from(*v)).collect())],
            0,
        )
    }

    fn gateway(cfg: serde_json::Value) -> Gateway {
        let cfg: MockConfig = serde_json::from_value(cfg).unwrap();
        Gateway::new(Arc::new(MockOracle::new(cfg).unwrap()), "mock")
    }

    fn expr(t: &str) -> NlExpr {
        NlExpr::parse(t).unwrap()
    }

    fn good_rule() -> serde_json::Value {
        json!({"rules": [{"task": "filter", "field": "t", "contains_any": ["good"], "verdict": true}]})
    }

    #[test]
    fn filter_per_tuple_and_batched() {
        let g = gateway(good_rule());
        let ctx = SemCtx::new(&g).with_workers(3);
        let c = texts("r", "t", &["good", "bad", "so good", "meh"]);
        let (v, s) = eval_sem_filter(&ctx, &c, &expr("{t} is good"), EvalMode::PerTuple).unwrap();
        assert_eq!(v, [true, false, true, false]);
        assert_eq!(s.calls, 4);

        let vals: Vec<String> = (0..32).map(|i| if i % 3 == 0 { "good".into() } else { "x".into() }).collect();
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        let c = texts("r", "t", &refs);
        let (b, s) = eval_sem_filter(&ctx, &c, &expr("{t} is good"), EvalMode::Batched(16)).unwrap();
        let (p, _) = eval_sem_filter(&ctx, &c, &expr("{t} is good"), EvalMode::PerTuple).unwrap();
        assert_eq!(b, p);
        assert_eq!((s.calls, s.fallbacks), (2, 0));
    }

    #[test]
    fn truncated_batch_falls_back_for_that_batch_only() {
        let mut cfg = good_rule();
        cfg["faults"] = json!({"truncate_marker": "poison"});
        let g = gateway(cfg);
        let ctx = SemCtx::new(&g);
        let mut vals = vec!["good"; 32];
        vals[20] = "poison";
        let c = texts("r", "t", &vals);
        let (v, s) = eval_sem_filter(&ctx, &c, &expr("{t} is good"), EvalMode::Batched(16)).unwrap();
        assert_eq!(s.calls, 1 + (1 + 16));
        assert_eq!(s.fallbacks, 1);
        assert_eq!(v.iter().filter(|b| **b).count(), 31);
    }

    #[test]
    fn projection_counts_and_empty_input() {
        let g = gateway(json!({"rules": [{"task": "proj", "verdict": {"kind": "echo_words", "field": "t", "words": 3}}]}));
        let ctx = SemCtx::new(&g);
        let c = texts("r", "t", &["a b c d", "e f", "g h i j k"]);
        let (v, s) = eval_sem_proj(&ctx, &c, &expr("keywords of {t}"), EvalMode::PerTuple).unwrap();
        assert_eq!(v, [Value::from("a b c"), Value::from("e f"), Value::from("g h i")]);
        assert_eq!(s.calls, 3);
        let (v, s) = eval_sem_proj(&ctx, &c.take(&[]), &expr("keywords of {t}"), EvalMode::PerTuple).unwrap();
        assert!(v.is_empty());
        assert_eq!(s.calls, 0);
        let c8 = texts("r", "t", &["w"; 8]);
        let (_, s) = eval_sem_proj(&ctx, &c8, &expr("keywords of {t}"), EvalMode::Batched(8)).unwrap();
        assert_eq!(s.calls, 1);
    }

    #[test]
    fn join_matches_brute_force() {
        let g = gateway(json!({"rules": [{"task": "join", "verdict": {"kind": "shares_word", "left": "a.t", "right": "b.u"}}]}));
        let ctx = SemCtx::new(&g).with_workers(2);
        let l = texts("a", "t", &["red fox", "blue sky", "green"]);
        let r = texts("b", "u", &["fox den", "grey sky", "red sky"]);
        let mut e = expr("{a.t} and {b.u} share a word");
        e.placeholders[0].bound = crate::sql::ColumnRef::new(Some("a"), "t");
        e.placeholders[1].bound = crate::sql::ColumnRef::new(Some("b"), "u");
        let (m, s) = eval_sem_join(&ctx, &l, &r, &e, None, EvalMode::PerTuple).unwrap();
        assert_eq!(s.calls, 9);
        let mut brute = Vec::new();
        for (i, x) in ["red fox", "blue sky", "green"].iter().enumerate() {
            for (j, y) in ["fox den", "grey sky", "red sky"].iter().enumerate() {
                if x.split(' ').any(|w| y.split(' ').any(|v| v == w)) {
                    brute.push((i, j));
                }
            }
        }
        assert_eq!(m, brute);
        let (m, s) = eval_sem_join(&ctx, &l.take(&[]), &r, &e, None, EvalMode::PerTuple).unwrap();
        assert!(m.is_empty() && s.calls == 0);
    }

    #[test]
    fn orderby_is_selection_sort() {
        let g = gateway(json!({"rules": [{"task": "compare", "verdict": {"kind": "shorter_first", "field": "t"}}]}));
        let ctx = SemCtx::new(&g);
        let c = texts("r", "t", &["aaaaa", "bb", "ccccccccc"]);
        let (p, s) = eval_sem_orderby(&ctx, &c, &expr("{t} is shorter"), false).unwrap();
        assert_eq!(p, [1, 0, 2]);
        assert_eq!(s.calls, 3);
        let c4 = texts("r", "t", &["aaa", "b", "cc", "dddd"]);
        let (p, s) = eval_sem_orderby(&ctx, &c4, &expr("{t} is shorter"), true).unwrap();
        assert_eq!(p, [3, 0, 2, 1]);
        assert!(s.calls <= 6);
        let (p, s) = eval_sem_orderby(&ctx, &c4.take(&[2]), &expr("{t}"), false).unwrap();
        assert_eq!((p, s.calls), (vec![0], 0));
    }

    #[test]
    fn aggregation_hierarchy() {
        let g = gateway(json!({}));
        let ctx = SemCtx::new(&g);
        let e = expr("summarize {t}");
        let few: Vec<String> = (0..5).map(|i| format!("value {i}")).collect();
        let (v, s) = eval_sem_agg(&ctx, &few, &e, 4096).unwrap();
        assert_eq!((v, s.calls), (Value::from("5 values"), 1));
        let (v, s) = eval_sem_agg(&ctx, &[], &e, 4096).unwrap();
        assert_eq!((v, s.calls), (Value::Null, 0));
        let long = vec!["x".repeat(100_000)];
        assert!(eval_sem_agg(&ctx, &long, &e, 4096).is_err());
    }

    #[test]
    fn fused_filter_then_projection() {
        let g = gateway(json!({"rules": [
            {"task": "filter", "field": "t", "contains_any": ["good"], "verdict": true},
            {"task": "proj", "verdict": {"kind": "echo_words", "field": "t", "words": 1}}
        ]}));
        let ctx = SemCtx::new(&g);
        let c = texts("r", "t", &["good one", "bad one"]);
        let a = PlanNodeStep::filter("{t} is good");
        let b = PlanNodeStep::proj("first word of {t}", "w");
        let node = super::super::fusion::fuse_steps(a, b).unwrap();
        let (out, s) = eval_fused(&ctx, &c, &node, EvalMode::PerTuple).unwrap();
        assert_eq!(out, [(Value::Bool(true), Value::from("good")), (Value::Bool(false), Value::Null)]);
        assert_eq!(s.calls, 2);
        let (out2, s) = eval_fused(&ctx, &c, &node, EvalMode::Batched(4)).unwrap();
        assert_eq!(out, out2);
        assert_eq!(s.calls, 1);
    }

    struct PlanNodeStep;
    impl PlanNodeStep {
        fn filter(t: &str) -> crate::sql::FusedStep {
            crate::sql::FusedStep {
                kind: StepKind::Filter,
                expr: NlExpr::parse(t).unwrap(),
                alias: None,
            }
        }
        fn proj(t: &str, alias: &str) -> crate::sql::FusedStep {
            crate::sql::FusedStep {
                kind: StepKind::Proj,
                expr: NlExpr::parse(t).unwrap(),
                alias: Some(alias.into()),
            }
        }
    }
}
