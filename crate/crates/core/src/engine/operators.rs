use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use crate::aqe::{run_aqe, AqeRun};
use crate::catalog::{chunk_scan, Chunk, ChunkScan, Column, Schema};
use crate::sql::{explain, AggFunc, Aggregate, EvalMode, FusedNode, JoinKind, NlExpr, NodeKind, PlanNode, StepKind};
use crate::value::{DataType, GroupKey, Value};
use crate::{Error, Result};

use super::eval::{compile, eval, predicate_mask, ChunkRow, Compiled, PairRow};
use super::metrics::{CallStats, MetricsHandle, OpMetrics};
use super::parallel::parallel_map;
use super::prompts::{agg_value, Bindings};
use super::semantic::{eval_fused, eval_sem_agg, eval_sem_filter, eval_sem_join, eval_sem_orderby, eval_sem_proj};
use super::ExecContext;

pub trait Operator {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>>;
}

type BoxOp = Box<dyn Operator>;

/// Adds timing, row counting and node attribution of errors.
struct Instrumented {
    inner: BoxOp,
    metrics: Arc<OpMetrics>,
    label: String,
}

impl Operator for Instrumented {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        let started = Instant::now();
        let out = self.inner.next(cx);
        self.metrics.add_wall(started.elapsed());
        match out {
            Ok(Some(c)) => {
                self.metrics.add_rows_out(c.len());
                Ok(Some(c))
            }
            Ok(None) => Ok(None),
            Err(e @ Error::Execution { .. }) => Err(e),
            Err(e) => Err(Error::execution(&self.label, e.to_string())),
        }
    }
}

/// Builds the operator tree for `node`; `counter` numbers nodes in
/// pre-order for labels such as `SemFilter#2`.
pub fn build(node: &PlanNode, cx: &ExecContext, counter: &mut usize) -> Result<(BoxOp, MetricsHandle)> {
    let label = format!("{}#{}", node.kind.name(), *counter);
    *counter += 1;
    let metrics = Arc::new(OpMetrics::default());
    let mut children = Vec::new();
    let mut handles = Vec::new();
    for c in &node.children {
        let (op, h) = build(c, cx, counter)?;
        children.push(op);
        handles.push(h);
    }
    let schema = Arc::new(node.schema.clone());
    let child_schema = |i: usize| &node.children[i].schema;
    let first = |children: &mut Vec<BoxOp>| children.remove(0);
    let fail = |m: String| Error::execution(&label, m);
    let inner: BoxOp = match &node.kind {
        NodeKind::Scan { table, .. } => {
            let t = cx.catalog.get(table)?;
            Box::new(ScanOp {
                scan: chunk_scan(t, cx.config.chunk_capacity),
                schema,
            })
        }
        NodeKind::RelFilter { predicate, .. } => Box::new(FilterOp {
            pred: compile(predicate, child_schema(0)).map_err(|e| fail(e.to_string()))?,
            child: first(&mut children),
        }),
        NodeKind::RelProject { exprs } => Box::new(ProjectOp {
            exprs: exprs
                .iter()
                .map(|e| compile(e, child_schema(0)))
                .collect::<Result<_>>()
                .map_err(|e| fail(e.to_string()))?,
            schema,
            child: first(&mut children),
        }),
        NodeKind::HashJoin {
            join_type,
            left_keys,
            right_keys,
            residual,
        } => {
            let joined = child_schema(0).join(child_schema(1));
            let right = children.pop().expect("join has two inputs");
            Box::new(HashJoinOp {
                kind: *join_type,
                left_keys: left_keys
                    .iter()
                    .map(|k| compile(k, child_schema(0)))
                    .collect::<Result<_>>()
                    .map_err(|e| fail(e.to_string()))?,
                right_keys: right_keys
                    .iter()
                    .map(|k| compile(k, child_schema(1)))
                    .collect::<Result<_>>()
                    .map_err(|e| fail(e.to_string()))?,
                residual: residual
                    .as_ref()
                    .map(|r| compile(r, &joined))
                    .transpose()
                    .map_err(|e| fail(e.to_string()))?,
                right_schema: Arc::new(child_schema(1).clone()),
                left: first(&mut children),
                right: Some(right),
                built: None,
                schema,
            })
        }
        NodeKind::GroupBy { keys, aggregates } => Box::new(GroupByOp {
            keys: keys
                .iter()
                .map(|k| compile(k, child_schema(0)))
                .collect::<Result<_>>()
                .map_err(|e| fail(e.to_string()))?,
            aggs: aggregates
                .iter()
                .map(|a| CompiledAgg::new(a, child_schema(0)))
                .collect::<Result<_>>()
                .map_err(|e| fail(e.to_string()))?,
            input_schema: Arc::new(child_schema(0).clone()),
            child: Some(first(&mut children)),
            out: None,
            schema,
            label: label.clone(),
            metrics: metrics.clone(),
        }),
        NodeKind::OrderBy { keys } => Box::new(OrderByOp {
            keys: keys
                .iter()
                .map(|(k, desc)| compile(k, child_schema(0)).map(|c| (c, *desc)))
                .collect::<Result<_>>()
                .map_err(|e| fail(e.to_string()))?,
            schema,
            child: Some(first(&mut children)),
            out: None,
        }),
        NodeKind::Limit { count } => Box::new(LimitOp {
            remaining: *count as usize,
            child: first(&mut children),
        }),
        NodeKind::SemFilter { expr, mode } => Box::new(SemFilterOp {
            expr: expr.clone(),
            mode: *mode,
            child: first(&mut children),
            label: label.clone(),
            metrics: metrics.clone(),
        }),
        NodeKind::SemProj { expr, mode, .. } => Box::new(SemProjOp {
            expr: expr.clone(),
            mode: *mode,
            schema,
            child: first(&mut children),
            label: label.clone(),
            metrics: metrics.clone(),
        }),
        NodeKind::SemJoin {
            expr,
            join_type,
            condition,
            mode,
        } => {
            let joined = child_schema(0).join(child_schema(1));
            let right = children.pop().expect("join has two inputs");
            Box::new(SemJoinOp {
                expr: expr.clone(),
                kind: *join_type,
                condition: condition
                    .as_ref()
                    .map(|c| compile(c, &joined))
                    .transpose()
                    .map_err(|e| fail(e.to_string()))?,
                mode: *mode,
                right_schema: Arc::new(child_schema(1).clone()),
                left: first(&mut children),
                right: Some(right),
                built: None,
                schema,
                label: label.clone(),
                metrics: metrics.clone(),
            })
        }
        NodeKind::SemOrderBy { expr, descending } => Box::new(SemOrderByOp {
            expr: expr.clone(),
            descending: *descending,
            schema,
            child: Some(first(&mut children)),
            out: None,
            label: label.clone(),
            metrics: metrics.clone(),
        }),
        NodeKind::Fused { node: f, mode } => Box::new(FusedOp {
            node: f.clone(),
            mode: *mode,
            schema,
            child: first(&mut children),
            label: label.clone(),
            metrics: metrics.clone(),
        }),
        NodeKind::AdaptiveFilters { filters } => Box::new(AdaptiveOp {
            filters: filters.clone(),
            schema,
            child: Some(first(&mut children)),
            out: None,
            label: label.clone(),
            metrics: metrics.clone(),
        }),
    };
    let detail = explain(&PlanNode::new(node.kind.clone(), vec![], node.schema.clone()))
        .trim_end()
        .to_string();
    let handle = MetricsHandle {
        operator: node.kind.name().to_string(),
        detail,
        metrics: metrics.clone(),
        children: handles,
    };
    Ok((
        Box::new(Instrumented {
            inner,
            metrics,
            label,
        }),
        handle,
    ))
}

fn drain(child: &mut BoxOp, cx: &ExecContext, schema: Arc<Schema>) -> Result<Chunk> {
    let mut parts = Vec::new();
    while let Some(c) = child.next(cx)? {
        parts.push(c);
    }
    Ok(Chunk::concat(schema, &parts))
}

/// Emits a materialized result in chunks of the configured size.
struct Buffered {
    chunks: std::vec::IntoIter<Chunk>,
}

impl Buffered {
    fn new(all: Chunk, capacity: usize) -> Self {
        Buffered {
            chunks: all.split(capacity, 0).into_iter(),
        }
    }
}

fn retag(c: &Chunk, schema: &Arc<Schema>) -> Chunk {
    Chunk::new(schema.clone(), c.columns.clone(), c.row_offset)
}

struct ScanOp {
    scan: ChunkScan,
    schema: Arc<Schema>,
}

impl Operator for ScanOp {
    fn next(&mut self, _cx: &ExecContext) -> Result<Option<Chunk>> {
        Ok(self.scan.next().map(|c| Chunk::new(self.schema.clone(), c.columns, c.row_offset)))
    }
}

struct FilterOp {
    pred: Compiled,
    child: BoxOp,
}

impl Operator for FilterOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        while let Some(c) = self.child.next(cx)? {
            let out = c.filter(&predicate_mask(&self.pred, &c));
            if !out.is_empty() {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }
}

struct ProjectOp {
    exprs: Vec<Compiled>,
    schema: Arc<Schema>,
    child: BoxOp,
}

impl Operator for ProjectOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        let Some(c) = self.child.next(cx)? else {
            return Ok(None);
        };
        let columns = self
            .exprs
            .iter()
            .zip(&self.schema.fields)
            .map(|(e, f)| Column::new(f.data_type, (0..c.len()).map(|i| eval(e, &ChunkRow(&c, i))).collect()))
            .collect();
        Ok(Some(Chunk::new(self.schema.clone(), columns, c.row_offset)))
    }
}

/// Rows `(l, r)` of a join, emitted as concatenated tuples.
fn join_rows(schema: &Arc<Schema>, left: &Chunk, right: &Chunk, pairs: &[(usize, usize)]) -> Chunk {
    let li: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let ri: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut columns = left.take(&li).columns;
    columns.extend(right.take(&ri).columns);
    Chunk::new(schema.clone(), columns, left.row_offset)
}

fn semi_rows(schema: &Arc<Schema>, left: &Chunk, pairs: &[(usize, usize)]) -> Chunk {
    let mut keep = vec![false; left.len()];
    for p in pairs {
        keep[p.0] = true;
    }
    retag(&left.filter(&keep), schema)
}

fn key_of(keys: &[Compiled], row: &ChunkRow) -> Option<Vec<GroupKey>> {
    keys.iter()
        .map(|k| {
            let v = eval(k, row);
            (!v.is_null()).then(|| v.group_key())
        })
        .collect()
}

struct HashJoinOp {
    kind: JoinKind,
    left_keys: Vec<Compiled>,
    right_keys: Vec<Compiled>,
    residual: Option<Compiled>,
    right_schema: Arc<Schema>,
    left: BoxOp,
    right: Option<BoxOp>,
    built: Option<(Chunk, HashMap<Vec<GroupKey>, Vec<usize>>)>,
    schema: Arc<Schema>,
}

impl Operator for HashJoinOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        if let Some(mut r) = self.right.take() {
            let right = drain(&mut r, cx, self.right_schema.clone())?;
            let mut table: HashMap<Vec<GroupKey>, Vec<usize>> = HashMap::new();
            if !self.right_keys.is_empty() {
                for i in 0..right.len() {
                    if let Some(k) = key_of(&self.right_keys, &ChunkRow(&right, i)) {
                        table.entry(k).or_default().push(i);
                    }
                }
            }
            self.built = Some((right, table));
        }
        let (right, table) = self.built.as_ref().expect("built above");
        while let Some(left) = self.left.next(cx)? {
            let mut pairs = Vec::new();
            let all: Vec<usize> = (0..right.len()).collect();
            for l in 0..left.len() {
                let candidates: &[usize] = if self.left_keys.is_empty() {
                    &all
                } else {
                    match key_of(&self.left_keys, &ChunkRow(&left, l)) {
                        Some(k) => table.get(&k).map_or(&[], Vec::as_slice),
                        None => &[],
                    }
                };
                for &r in candidates {
                    let ok = self.residual.as_ref().is_none_or(|res| {
                        eval(res, &PairRow { left: &left, l, right, r }).is_true()
                    });
                    if ok {
                        pairs.push((l, r));
                    }
                }
            }
            let out = match self.kind {
                JoinKind::Semi => semi_rows(&self.schema, &left, &pairs),
                _ => join_rows(&self.schema, &left, right, &pairs),
            };
            if !out.is_empty() {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }
}

enum AggKind {
    CountStar,
    Count(Compiled),
    Sum(Compiled),
    Avg(Compiled),
    Min(Compiled),
    Max(Compiled),
    Sem {
        expr: NlExpr,
        column: Option<Compiled>,
        bindings: Bindings,
    },
}

struct CompiledAgg {
    kind: AggKind,
}

impl CompiledAgg {
    fn new(a: &Aggregate, schema: &Schema) -> Result<Self> {
        let c = |e| compile(e, schema);
        let kind = match &a.func {
            AggFunc::CountStar => AggKind::CountStar,
            AggFunc::Count(e) => AggKind::Count(c(e)?),
            AggFunc::Sum(e) => AggKind::Sum(c(e)?),
            AggFunc::Avg(e) => AggKind::Avg(c(e)?),
            AggFunc::Min(e) => AggKind::Min(c(e)?),
            AggFunc::Max(e) => AggKind::Max(c(e)?),
            AggFunc::Sem { expr, column } => AggKind::Sem {
                expr: expr.clone(),
                column: column.as_ref().map(c).transpose()?,
                bindings: Bindings::new(&[expr], schema),
            },
        };
        Ok(CompiledAgg { kind })
    }
}

fn sum(values: impl Iterator<Item = Value>) -> Value {
    let mut int: Option<i64> = Some(0);
    let mut float = 0.0;
    let mut any = false;
    for v in values {
        match v {
            Value::Int(i) => {
                int = int.and_then(|s| s.checked_add(i));
                float += i as f64;
                any = true;
            }
            Value::Float(f) => {
                int = None;
                float += f;
                any = true;
            }
            _ => {}
        }
    }
    match (any, int) {
        (false, _) => Value::Null,
        (true, Some(i)) => Value::Int(i),
        (true, None) => Value::Float(float),
    }
}

fn extreme(values: impl Iterator<Item = Value>, max: bool) -> Value {
    values.filter(|v| !v.is_null()).fold(Value::Null, |best, v| {
        if best.is_null() {
            return v;
        }
        let better = if max {
            v.total_cmp(&best).is_gt()
        } else {
            v.total_cmp(&best).is_lt()
        };
        if better {
            v
        } else {
            best
        }
    })
}

struct GroupByOp {
    keys: Vec<Compiled>,
    aggs: Vec<CompiledAgg>,
    input_schema: Arc<Schema>,
    child: Option<BoxOp>,
    out: Option<Buffered>,
    schema: Arc<Schema>,
    label: String,
    metrics: Arc<OpMetrics>,
}

impl GroupByOp {
    fn aggregate(&self, cx: &ExecContext, input: &Chunk) -> Result<Chunk> {
        let mut index: HashMap<Vec<GroupKey>, usize> = HashMap::new();
        let mut groups: Vec<(Vec<Value>, Vec<usize>)> = Vec::new();
        for i in 0..input.len() {
            let row = ChunkRow(input, i);
            let vals: Vec<Value> = self.keys.iter().map(|k| eval(k, &row)).collect();
            let key: Vec<GroupKey> = vals.iter().map(Value::group_key).collect();
            let g = *index.entry(key).or_insert_with(|| {
                groups.push((vals, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(i);
        }
        if groups.is_empty() && self.keys.is_empty() {
            groups.push((Vec::new(), Vec::new()));
        }
        let sem = cx.sem(&self.label);
        let budget = cx.config.agg_budget;
        let aggs = &self.aggs;
        let rows = parallel_map(cx.config.workers, groups.len(), |g| -> Result<(Vec<Value>, CallStats)> {
            let (key_vals, members) = &groups[g];
            let mut out = key_vals.clone();
            let mut stats = CallStats::default();
            let col = |e: &Compiled| -> std::vec::IntoIter<Value> {
                members.iter().map(|&i| eval(e, &ChunkRow(input, i))).collect::<Vec<_>>().into_iter()
            };
            for a in aggs {
                out.push(match &a.kind {
                    AggKind::CountStar => Value::Int(members.len() as i64),
                    AggKind::Count(e) => Value::Int(col(e).filter(|v| !v.is_null()).count() as i64),
                    AggKind::Sum(e) => sum(col(e)),
                    AggKind::Avg(e) => {
                        let xs: Vec<f64> = col(e).filter_map(|v| v.as_f64()).collect();
                        if xs.is_empty() {
                            Value::Null
                        } else {
                            Value::Float(xs.iter().sum::<f64>() / xs.len() as f64)
                        }
                    }
                    AggKind::Min(e) => extreme(col(e), false),
                    AggKind::Max(e) => extreme(col(e), true),
                    AggKind::Sem {
                        expr,
                        column,
                        bindings,
                    } => {
                        let values: Vec<String> = match column {
                            Some(c) => col(c).filter(|v| !v.is_null()).map(|v| v.render()).collect(),
                            None => members
                                .iter()
                                .map(|&i| agg_value(&bindings.values(&ChunkRow(input, i))))
                                .collect(),
                        };
                        let (v, s) = eval_sem_agg(&sem, &values, expr, budget)?;
                        stats += s;
                        v
                    }
                });
            }
            Ok((out, stats))
        })?;
        let mut columns: Vec<Column> = self
            .schema
            .fields
            .iter()
            .map(|f| Column::new(f.data_type, Vec::with_capacity(rows.len())))
            .collect();
        for (vals, stats) in rows {
            self.metrics.add_calls(&stats);
            for (c, v) in columns.iter_mut().zip(vals) {
                c.values.push(v);
            }
        }
        Ok(Chunk::new(self.schema.clone(), columns, 0))
    }
}

impl Operator for GroupByOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        if let Some(mut child) = self.child.take() {
            let input = drain(&mut child, cx, self.input_schema.clone())?;
            let out = self.aggregate(cx, &input)?;
            self.out = Some(Buffered::new(out, cx.config.chunk_capacity));
        }
        Ok(self.out.as_mut().and_then(|b| b.chunks.next()))
    }
}

struct OrderByOp {
    keys: Vec<(Compiled, bool)>,
    schema: Arc<Schema>,
    child: Option<BoxOp>,
    out: Option<Buffered>,
}

impl Operator for OrderByOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        if let Some(mut child) = self.child.take() {
            let input = drain(&mut child, cx, self.schema.clone())?;
            let keys: Vec<Vec<Value>> = (0..input.len())
                .map(|i| self.keys.iter().map(|(k, _)| eval(k, &ChunkRow(&input, i))).collect())
                .collect();
            let mut idx: Vec<usize> = (0..input.len()).collect();
            idx.sort_by(|&a, &b| {
                for (n, (_, desc)) in self.keys.iter().enumerate() {
                    let o = keys[a][n].total_cmp(&keys[b][n]);
                    let o = if *desc { o.reverse() } else { o };
                    if o.is_ne() {
                        return o;
                    }
                }
                std::cmp::Ordering::Equal
            });
            self.out = Some(Buffered::new(input.take(&idx), cx.config.chunk_capacity));
        }
        Ok(self.out.as_mut().and_then(|b| b.chunks.next()))
    }
}

struct LimitOp {
    remaining: usize,
    child: BoxOp,
}

impl Operator for LimitOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let Some(c) = self.child.next(cx)? else {
            return Ok(None);
        };
        let n = c.len().min(self.remaining);
        self.remaining -= n;
        if n == c.len() {
            Ok(Some(c))
        } else {
            Ok(Some(c.take(&(0..n).collect::<Vec<_>>())))
        }
    }
}

struct SemFilterOp {
    expr: NlExpr,
    mode: EvalMode,
    child: BoxOp,
    label: String,
    metrics: Arc<OpMetrics>,
}

impl Operator for SemFilterOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        while let Some(c) = self.child.next(cx)? {
            let (mask, stats) = eval_sem_filter(&cx.sem(&self.label), &c, &self.expr, self.mode)?;
            self.metrics.add_calls(&stats);
            let out = c.filter(&mask);
            if !out.is_empty() {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }
}

struct SemProjOp {
    expr: NlExpr,
    mode: EvalMode,
    schema: Arc<Schema>,
    child: BoxOp,
    label: String,
    metrics: Arc<OpMetrics>,
}

impl Operator for SemProjOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        let Some(c) = self.child.next(cx)? else {
            return Ok(None);
        };
        let (vals, stats) = eval_sem_proj(&cx.sem(&self.label), &c, &self.expr, self.mode)?;
        self.metrics.add_calls(&stats);
        Ok(Some(c.with_column(self.schema.clone(), Column::new(DataType::Text, vals))))
    }
}

struct SemJoinOp {
    expr: NlExpr,
    kind: JoinKind,
    condition: Option<Compiled>,
    mode: EvalMode,
    right_schema: Arc<Schema>,
    left: BoxOp,
    right: Option<BoxOp>,
    built: Option<Chunk>,
    schema: Arc<Schema>,
    label: String,
    metrics: Arc<OpMetrics>,
}

impl Operator for SemJoinOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        if let Some(mut r) = self.right.take() {
            self.built = Some(drain(&mut r, cx, self.right_schema.clone())?);
        }
        let right = self.built.as_ref().expect("built above");
        if right.is_empty() {
            return Ok(None);
        }
        while let Some(left) = self.left.next(cx)? {
            let (pairs, stats) = eval_sem_join(
                &cx.sem(&self.label),
                &left,
                right,
                &self.expr,
                self.condition.as_ref(),
                self.mode,
            )?;
            self.metrics.add_calls(&stats);
            let out = match self.kind {
                JoinKind::Semi => semi_rows(&self.schema, &left, &pairs),
                _ => join_rows(&self.schema, &left, right, &pairs),
            };
            if !out.is_empty() {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }
}

struct SemOrderByOp {
    expr: NlExpr,
    descending: bool,
    schema: Arc<Schema>,
    child: Option<BoxOp>,
    out: Option<Buffered>,
    label: String,
    metrics: Arc<OpMetrics>,
}

impl Operator for SemOrderByOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        if let Some(mut child) = self.child.take() {
            let input = drain(&mut child, cx, self.schema.clone())?;
            let (perm, stats) = eval_sem_orderby(&cx.sem(&self.label), &input, &self.expr, self.descending)?;
            self.metrics.add_calls(&stats);
            self.out = Some(Buffered::new(input.take(&perm), cx.config.chunk_capacity));
        }
        Ok(self.out.as_mut().and_then(|b| b.chunks.next()))
    }
}

struct FusedOp {
    node: FusedNode,
    mode: EvalMode,
    schema: Arc<Schema>,
    child: BoxOp,
    label: String,
    metrics: Arc<OpMetrics>,
}

impl Operator for FusedOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        while let Some(c) = self.child.next(cx)? {
            let (out, stats) = eval_fused(&cx.sem(&self.label), &c, &self.node, self.mode)?;
            self.metrics.add_calls(&stats);
            let (first, second) = (self.node.first.kind, self.node.second.kind);
            let mut mask = vec![true; c.len()];
            let mut columns = c.columns.clone();
            let mut added = Vec::new();
            for (i, (a, b)) in out.into_iter().enumerate() {
                if first == StepKind::Filter {
                    mask[i] &= a.is_true();
                }
                if second == StepKind::Filter {
                    mask[i] &= b.is_true();
                }
                added.push((a, b));
            }
            if first == StepKind::Proj {
                columns.push(Column::new(DataType::Text, added.iter().map(|p| p.0.clone()).collect()));
            }
            if second == StepKind::Proj {
                columns.push(Column::new(DataType::Text, added.iter().map(|p| p.1.clone()).collect()));
            }
            let out = Chunk::new(self.schema.clone(), columns, c.row_offset).filter(&mask);
            if !out.is_empty() {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }
}

struct AdaptiveOp {
    filters: Vec<NlExpr>,
    schema: Arc<Schema>,
    child: Option<BoxOp>,
    out: Option<Buffered>,
    label: String,
    metrics: Arc<OpMetrics>,
}

impl Operator for AdaptiveOp {
    fn next(&mut self, cx: &ExecContext) -> Result<Option<Chunk>> {
        if let Some(mut child) = self.child.take() {
            let input = drain(&mut child, cx, self.schema.clone())?;
            let run = AqeRun {
                cfg: &cx.config.aqe_config,
                chunk_capacity: cx.config.chunk_capacity,
                batch_size: cx.config.batch_size,
                fusion: cx.config.fusion,
                batching: cx.config.batching,
            };
            let (mask, trace, stats) = run_aqe(&cx.sem(&self.label), &self.filters, &input, &run)?;
            self.metrics.add_calls(&stats);
            cx.push_trace(trace);
            self.out = Some(Buffered::new(input.filter(&mask), cx.config.chunk_capacity));
        }
        Ok(self.out.as_mut().and_then(|b| b.chunks.next()))
    }
}
