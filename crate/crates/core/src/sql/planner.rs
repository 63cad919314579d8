//! Binds a parsed query against the catalog and builds the initial logical
//! plan. Every `s'...'` literal becomes its own semantic operator.

use super::ast::{FromClause, JoinClause, JoinKind, Query, SelectItem, TableRef};
use super::expr::{BinaryOp, Expr, AGGREGATES};
use super::nl::{ColumnRef, NlExpr};
use super::parser::parse_expr;
use super::plan::{AggFunc, Aggregate, EvalMode, NodeKind, PlanNode, StepKind};
use super::{ParseError, Span};
use crate::catalog::{Catalog, Field, Resolve, Schema};
use crate::value::{DataType, Value};

type PResult<T> = Result<T, ParseError>;

const SCALAR_FUNCTIONS: &[&str] = &["length", "lower", "upper", "trim", "coalesce", "abs", "round"];

pub fn plan_query(query: &Query, catalog: &Catalog) -> crate::Result<PlanNode> {
    Ok(Planner::new(catalog).select(query)?)
}

pub struct Planner<'a> {
    catalog: &'a Catalog,
}

/// One output column of a SELECT list, bound to the plan below the final
/// projection.
struct Output {
    expr: Expr,
    field: Field,
    /// The user-written alias, if any.
    alias: Option<String>,
}

impl<'a> Planner<'a> {
    pub fn new(catalog: &'a Catalog) -> Self {
        Planner { catalog }
    }

    pub fn select(&self, q: &Query) -> PResult<PlanNode> {
        let from = q
            .from
            .as_ref()
            .ok_or_else(|| ParseError::new("a FROM clause is required", q.span))?;
        let mut plan = self.from_clause(from)?;

        if let Some(w) = &q.where_clause {
            let mut sem = Vec::new();
            for c in w.clone().conjuncts() {
                match c {
                    Expr::Sem { text, span } => sem.push((text, span)),
                    other => {
                        reject_aggregates(&other, "WHERE")?;
                        let bound = bind(&other, &plan.schema, q.span)?;
                        plan = push_down_filter(plan, bound, None);
                    }
                }
            }
            for (text, span) in sem {
                let expr = nl_literal(&text, span, 2, &plan.schema)?;
                plan = PlanNode::unary(
                    NodeKind::SemFilter {
                        expr,
                        mode: EvalMode::PerTuple,
                    },
                    plan,
                );
            }
        }

        let is_agg = !q.group_by.is_empty()
            || q.having.is_some()
            || q.items.iter().any(|i| match i {
                SelectItem::Expr { expr, .. } => expr.contains_aggregate(),
                _ => false,
            });
        let (mut plan, outputs) = if is_agg {
            self.aggregate_query(q, plan)?
        } else {
            self.plain_query(q, plan)?
        };

        plan = self.order_by(q, plan, &outputs)?;

        let star_only = !is_agg
            && matches!(q.items.as_slice(), [SelectItem::Wildcard { qualifier: None, .. }]);
        if !star_only {
            let schema = Schema::new(outputs.iter().map(|o| o.field.clone()).collect());
            plan = PlanNode::new(
                NodeKind::RelProject {
                    exprs: outputs.into_iter().map(|o| o.expr).collect(),
                },
                vec![plan],
                schema,
            );
        }
        if q.distinct {
            let keys = plan.schema.fields.iter().map(column_of).collect();
            let schema = plan.schema.clone();
            plan = PlanNode::new(
                NodeKind::GroupBy {
                    keys,
                    aggregates: Vec::new(),
                },
                vec![plan],
                schema,
            );
        }
        if let Some(count) = q.limit {
            plan = PlanNode::unary(NodeKind::Limit { count }, plan);
        }
        Ok(plan)
    }

    fn from_clause(&self, f: &FromClause) -> PResult<PlanNode> {
        let mut plan = self.table_ref(&f.base)?;
        for j in &f.joins {
            let right = self.table_ref(&j.table)?;
            plan = self.join(plan, right, j)?;
        }
        Ok(plan)
    }

    fn table_ref(&self, t: &TableRef) -> PResult<PlanNode> {
        match t {
            TableRef::Named { name, alias, span } => {
                let short = name.rsplit('.').next().unwrap_or(name);
                let table = self
                    .catalog
                    .get(name)
                    .or_else(|_| self.catalog.get(short))
                    .map_err(|_| ParseError::new(format!("unknown table {name}"), *span))?;
                let alias = alias.clone().unwrap_or_else(|| short.to_string());
                let schema = table.schema.requalify(Some(&alias));
                Ok(PlanNode::new(
                    NodeKind::Scan {
                        table: table.name.clone(),
                        alias,
                    },
                    Vec::new(),
                    schema,
                ))
            }
            TableRef::Subquery { query, alias, .. } => {
                let mut inner = self.select(query)?;
                if !matches!(inner.kind, NodeKind::RelProject { .. }) {
                    let exprs = inner.schema.fields.iter().map(column_of).collect();
                    let schema = inner.schema.clone();
                    inner = PlanNode::new(NodeKind::RelProject { exprs }, vec![inner], schema);
                }
                inner.schema = inner.schema.requalify(alias.as_deref());
                Ok(inner)
            }
        }
    }

    fn join(&self, mut left: PlanNode, mut right: PlanNode, j: &JoinClause) -> PResult<PlanNode> {
        let joined = left.schema.join(&right.schema);
        let mut left_keys = Vec::new();
        let mut right_keys = Vec::new();
        let mut residual = Vec::new();
        let mut sem_join: Option<NlExpr> = None;
        let mut left_sem = Vec::new();
        let mut right_sem = Vec::new();

        for c in j.on.clone().map(Expr::conjuncts).unwrap_or_default() {
            match c {
                Expr::Sem { text, span } => {
                    let nl = nl_literal(&text, span, 2, &joined)?;
                    let cols = nl.columns();
                    let in_left = cols.iter().all(|c| resolves_ref(&left.schema, c));
                    let in_right = cols.iter().all(|c| resolves_ref(&right.schema, c));
                    if !cols.is_empty() && in_left {
                        left_sem.push(nl);
                    } else if !cols.is_empty() && in_right {
                        right_sem.push(nl);
                    } else if sem_join.is_some() {
                        return Err(ParseError::new(
                            "only one natural-language join condition per JOIN is supported",
                            span,
                        ));
                    } else {
                        sem_join = Some(nl);
                    }
                }
                other => {
                    reject_aggregates(&other, "JOIN ON")?;
                    let bound = bind(&other, &joined, j.span)?;
                    if let Some((l, r)) = equi_pair(&bound, &left.schema, &right.schema) {
                        left_keys.push(l);
                        right_keys.push(r);
                    } else if resolves(&right.schema, &bound) {
                        right = push_down_filter(right, bound, None);
                    } else if resolves(&left.schema, &bound) {
                        left = push_down_filter(left, bound, None);
                    } else {
                        residual.push(bound);
                    }
                }
            }
        }
        for expr in left_sem {
            left = PlanNode::unary(
                NodeKind::SemFilter {
                    expr,
                    mode: EvalMode::PerTuple,
                },
                left,
            );
        }
        for expr in right_sem {
            right = PlanNode::unary(
                NodeKind::SemFilter {
                    expr,
                    mode: EvalMode::PerTuple,
                },
                right,
            );
        }
        let schema = match j.kind {
            JoinKind::Semi => left.schema.clone(),
            _ => joined,
        };
        let join_type = if j.kind == JoinKind::Cross && !left_keys.is_empty() {
            JoinKind::Inner
        } else {
            j.kind
        };
        let kind = match sem_join {
            Some(expr) => {
                let mut cond: Vec<Expr> = left_keys
                    .into_iter()
                    .zip(right_keys)
                    .map(|(l, r)| Expr::binary(BinaryOp::Eq, l, r))
                    .collect();
                cond.extend(residual);
                NodeKind::SemJoin {
                    expr,
                    join_type,
                    condition: Expr::conjunction(cond),
                    mode: EvalMode::PerTuple,
                }
            }
            None => NodeKind::HashJoin {
                join_type,
                left_keys,
                right_keys,
                residual: Expr::conjunction(residual),
            },
        };
        Ok(PlanNode::new(kind, vec![left, right], schema))
    }

    fn plain_query(&self, q: &Query, mut plan: PlanNode) -> PResult<(PlanNode, Vec<Output>)> {
        let mut outputs = Vec::new();
        for (idx, item) in q.items.iter().enumerate() {
            match item {
                SelectItem::Wildcard { qualifier, span } => {
                    let before = outputs.len();
                    for f in &plan.schema.fields {
                        let matches = match qualifier {
                            None => true,
                            Some(q) => f.qualifier.as_deref().is_some_and(|fq| fq.eq_ignore_ascii_case(q)),
                        };
                        if matches {
                            outputs.push(Output {
                                expr: column_of(f),
                                field: f.clone(),
                                alias: None,
                            });
                        }
                    }
                    if outputs.len() == before {
                        return Err(ParseError::new("wildcard matches no columns", *span));
                    }
                }
                SelectItem::Expr { expr, alias, span } => {
                    if let Expr::Sem { text, span: s } = expr {
                        let (next, out) = sem_proj(plan, text, *s, alias.as_deref(), idx)?;
                        plan = next;
                        outputs.push(out);
                        continue;
                    }
                    let bound = bind(expr, &plan.schema, *span)?;
                    outputs.push(output_for(expr, bound, alias.as_deref(), &plan.schema));
                }
            }
        }
        Ok((plan, outputs))
    }

    fn aggregate_query(&self, q: &Query, input: PlanNode) -> PResult<(PlanNode, Vec<Output>)> {
        let mut keys = Vec::new();
        let mut key_fields = Vec::new();
        for k in &q.group_by {
            if k.contains_sem() {
                let span = first_sem_span(k).unwrap_or(q.span);
                return Err(ParseError::new(
                    "a natural-language expression is not supported in GROUP BY",
                    span,
                ));
            }
            reject_aggregates(k, "GROUP BY")?;
            let bound = bind(k, &input.schema, q.span)?;
            let field = match &bound {
                Expr::Column(c) => input.schema.fields[index_of_ref(&input.schema, c)].clone(),
                other => Field::new(None, &other.to_string(), expr_type(other, &input.schema)),
            };
            keys.push(bound);
            key_fields.push(field);
        }

        let mut agg = AggBuilder {
            input: &input.schema,
            keys: &keys,
            key_fields: &key_fields,
            aggregates: Vec::new(),
            aliases: q
                .items
                .iter()
                .filter_map(|i| match i {
                    SelectItem::Expr {
                        expr,
                        alias: Some(a),
                        ..
                    } => Some((a.clone(), expr.clone())),
                    _ => None,
                })
                .collect(),
            span: q.span,
        };

        // Select items first so aggregates get their aliases as names.
        enum Pending {
            Rel(Expr, Option<String>, Expr),
            Sem(String, Span, Option<String>, usize),
        }
        let mut pending = Vec::new();
        for (idx, item) in q.items.iter().enumerate() {
            match item {
                SelectItem::Wildcard { span, .. } => {
                    return Err(ParseError::new(
                        "* is not allowed in an aggregate query",
                        *span,
                    ))
                }
                SelectItem::Expr { expr, alias, .. } => {
                    if let Expr::Sem { text, span } = expr {
                        pending.push(Pending::Sem(text.clone(), *span, alias.clone(), idx));
                    } else {
                        let rewritten = agg.rewrite(expr, alias.as_deref())?;
                        pending.push(Pending::Rel(rewritten, alias.clone(), expr.clone()));
                    }
                }
            }
        }
        let mut having_rel = Vec::new();
        let mut having_sem = Vec::new();
        if let Some(h) = &q.having {
            for c in h.clone().conjuncts() {
                match c {
                    Expr::Sem { text, span } => having_sem.push((text, span)),
                    other => having_rel.push(agg.rewrite(&other, None)?),
                }
            }
        }
        let mut order_exprs = Vec::new();
        for o in &q.order_by {
            let is_position = matches!(o.expr, Expr::Literal(Value::Int(_)));
            let is_alias = matches!(&o.expr, Expr::Column(c) if c.table_alias.is_none()
                && q.items.iter().any(|i| matches!(i, SelectItem::Expr { alias: Some(a), .. } if a.eq_ignore_ascii_case(&c.column))));
            if !is_position && !is_alias && !o.expr.contains_sem() {
                order_exprs.push(agg.rewrite(&o.expr, None)?);
            } else {
                order_exprs.push(Expr::Literal(Value::Null));
            }
        }

        let AggBuilder { aggregates, .. } = agg;
        let mut fields = key_fields.clone();
        for a in &aggregates {
            fields.push(Field::new(None, &a.name, agg_type(&a.func, &input.schema)));
        }
        let mut plan = PlanNode::new(
            NodeKind::GroupBy { keys, aggregates },
            vec![input],
            Schema::new(fields),
        );
        for pred in having_rel {
            plan = PlanNode::unary(
                NodeKind::RelFilter {
                    predicate: pred,
                    deduced_from: None,
                },
                plan,
            );
        }
        for (text, span) in having_sem {
            let expr = nl_literal(&text, span, 2, &plan.schema)?;
            plan = PlanNode::unary(
                NodeKind::SemFilter {
                    expr,
                    mode: EvalMode::PerTuple,
                },
                plan,
            );
        }
        let mut outputs = Vec::new();
        for p in pending {
            match p {
                Pending::Rel(expr, alias, original) => {
                    outputs.push(output_for(&original, expr, alias.as_deref(), &plan.schema))
                }
                Pending::Sem(text, span, alias, idx) => {
                    let (next, out) = sem_proj(plan, &text, span, alias.as_deref(), idx)?;
                    plan = next;
                    outputs.push(out);
                }
            }
        }
        let _ = order_exprs;
        Ok((plan, outputs))
    }

    fn order_by(&self, q: &Query, plan: PlanNode, outputs: &[Output]) -> PResult<PlanNode> {
        if q.order_by.is_empty() {
            return Ok(plan);
        }
        if let Some(sem) = q.order_by.iter().find(|o| matches!(o.expr, Expr::Sem { .. })) {
            if q.order_by.len() > 1 {
                return Err(ParseError::new(
                    "a natural-language ORDER BY must be the only sort key",
                    sem.span,
                ));
            }
            let Expr::Sem { text, span } = &sem.expr else {
                unreachable!()
            };
            let expr = nl_literal(text, *span, 2, &plan.schema)?;
            return Ok(PlanNode::unary(
                NodeKind::SemOrderBy {
                    expr,
                    descending: sem.descending,
                },
                plan,
            ));
        }
        let mut keys = Vec::new();
        for o in &q.order_by {
            let key = match &o.expr {
                Expr::Literal(Value::Int(k)) => {
                    let k = *k;
                    if k < 1 || k as usize > outputs.len() {
                        return Err(ParseError::new("ORDER BY position out of range", o.span));
                    }
                    outputs[k as usize - 1].expr.clone()
                }
                Expr::Column(c)
                    if c.table_alias.is_none()
                        && outputs.iter().any(|out| {
                            out.alias.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(&c.column))
                        }) =>
                {
                    outputs
                        .iter()
                        .find(|out| out.alias.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(&c.column)))
                        .unwrap()
                        .expr
                        .clone()
                }
                other => {
                    if other.contains_aggregate() {
                        // Aggregates in ORDER BY must match one already computed.
                        let name = other.to_string();
                        match plan.schema.index_of(None, &name) {
                            Some(i) => column_of(&plan.schema.fields[i]),
                            None => {
                                return Err(ParseError::new(
                                    "ORDER BY aggregates must also appear in the SELECT list",
                                    o.span,
                                ))
                            }
                        }
                    } else {
                        bind(other, &plan.schema, o.span)?
                    }
                }
            };
            keys.push((key, o.descending));
        }
        Ok(PlanNode::unary(NodeKind::OrderBy { keys }, plan))
    }
}

struct AggBuilder<'s> {
    input: &'s Schema,
    keys: &'s [Expr],
    key_fields: &'s [Field],
    aggregates: Vec<Aggregate>,
    aliases: Vec<(String, Expr)>,
    span: Span,
}

impl AggBuilder<'_> {
    /// Rewrites a select, HAVING or ORDER BY expression over the GroupBy
    /// output: aggregate calls become references to aggregate columns and
    /// grouping expressions become references to key columns.
    fn rewrite(&mut self, e: &Expr, alias: Option<&str>) -> PResult<Expr> {
        if e.is_aggregate_call() {
            return self.aggregate(e, alias);
        }
        if !e.contains_aggregate() && !e.contains_sem() {
            if let Ok(bound) = bind(e, self.input, self.span) {
                if let Some(i) = self.keys.iter().position(|k| *k == bound) {
                    return Ok(column_of(&self.key_fields[i]));
                }
                if matches!(bound, Expr::Literal(_)) {
                    return Ok(bound);
                }
            }
        }
        match e {
            Expr::Column(c) => {
                if c.table_alias.is_none() {
                    if let Some((a, item)) = self
                        .aliases
                        .iter()
                        .find(|(a, _)| a.eq_ignore_ascii_case(&c.column))
                        .cloned()
                    {
                        if item.is_aggregate_call() {
                            if let Some(existing) = self.aggregates.iter().find(|x| x.name == a) {
                                return Ok(Expr::Column(ColumnRef::bare(&existing.name)));
                            }
                            return self.aggregate(&item, Some(&a));
                        }
                        return self.rewrite(&item, None);
                    }
                }
                Err(ParseError::new(
                    format!("column {c} must appear in GROUP BY or inside an aggregate"),
                    self.span,
                ))
            }
            Expr::Sem { span, .. } => Err(ParseError::new(
                "a natural-language expression is not supported in this position",
                *span,
            )),
            _ => {
                let mut err = None;
                let out = e.try_transform(&mut |node| {
                    if std::ptr::eq(node, e) {
                        return None;
                    }
                    match self.rewrite(node, None) {
                        Ok(x) => Some(Some(x)),
                        Err(er) => {
                            err = Some(er);
                            Some(None)
                        }
                    }
                });
                out.ok_or_else(|| err.unwrap())
            }
        }
    }

    fn aggregate(&mut self, call: &Expr, alias: Option<&str>) -> PResult<Expr> {
        let Expr::Function {
            name,
            args,
            star,
            span,
        } = call
        else {
            unreachable!()
        };
        let arg = |i: usize| -> PResult<Expr> {
            let a = args.get(i).ok_or_else(|| {
                ParseError::new(format!("{name} expects an argument"), *span)
            })?;
            if a.contains_aggregate() {
                return Err(ParseError::new("nested aggregates are not supported", *span));
            }
            bind(a, self.input, *span)
        };
        let func = match name.as_str() {
            "count" if *star => AggFunc::CountStar,
            "count" => AggFunc::Count(arg(0)?),
            "sum" => AggFunc::Sum(arg(0)?),
            "avg" => AggFunc::Avg(arg(0)?),
            "min" => AggFunc::Min(arg(0)?),
            "max" => AggFunc::Max(arg(0)?),
            "sem_agg" => {
                let (text, lit_span, quote) = match args.first() {
                    Some(Expr::Sem { text, span }) => (text.clone(), *span, 2),
                    Some(Expr::Literal(Value::Text(t))) => (t.clone(), *span, 0),
                    _ => {
                        return Err(ParseError::new(
                            "sem_agg expects a natural-language expression as its first argument",
                            *span,
                        ))
                    }
                };
                let expr = nl_literal(&text, lit_span, quote, self.input)?;
                let column = match args.get(1) {
                    Some(_) => Some(arg(1)?),
                    None => None,
                };
                if args.len() > 2 {
                    return Err(ParseError::new("sem_agg takes at most two arguments", *span));
                }
                AggFunc::Sem { expr, column }
            }
            _ => unreachable!(),
        };
        if *star && name != "count" {
            return Err(ParseError::new(format!("{name}(*) is not supported"), *span));
        }
        let is_sem = matches!(func, AggFunc::Sem { .. });
        if !is_sem {
            if let Some(existing) = self.aggregates.iter().find(|a| a.func == func) {
                return Ok(Expr::Column(ColumnRef::bare(&existing.name)));
            }
        }
        let base = match alias {
            Some(a) => a.to_string(),
            None if is_sem => "sem_agg".to_string(),
            None => call.to_string(),
        };
        let mut name = base.clone();
        let mut n = 1;
        while self
            .aggregates
            .iter()
            .any(|a| a.name.eq_ignore_ascii_case(&name))
            || self.key_fields.iter().any(|f| f.name.eq_ignore_ascii_case(&name))
        {
            n += 1;
            name = format!("{base}_{n}");
        }
        self.aggregates.push(Aggregate {
            func,
            name: name.clone(),
        });
        Ok(Expr::Column(ColumnRef::bare(&name)))
    }
}

fn sem_proj(
    plan: PlanNode,
    text: &str,
    span: Span,
    alias: Option<&str>,
    idx: usize,
) -> PResult<(PlanNode, Output)> {
    let expr = nl_literal(text, span, 2, &plan.schema)?;
    let name = alias
        .map(str::to_string)
        .unwrap_or_else(|| format!("sem_proj_{}", idx + 1));
    let field = Field::new(None, &name, DataType::Text);
    let mut schema = plan.schema.clone();
    schema.fields.push(field.clone());
    let node = PlanNode::new(
        NodeKind::SemProj {
            expr,
            alias: name.clone(),
            mode: EvalMode::PerTuple,
        },
        vec![plan],
        schema,
    );
    Ok((
        node,
        Output {
            expr: Expr::Column(ColumnRef::bare(&name)),
            field,
            alias: alias.map(str::to_string),
        },
    ))
}

fn output_for(original: &Expr, bound: Expr, alias: Option<&str>, schema: &Schema) -> Output {
    let data_type = expr_type(&bound, schema);
    let field = match (alias, &bound) {
        (Some(a), _) => Field::new(None, a, data_type),
        (None, Expr::Column(c)) => {
            let i = index_of_ref(schema, c);
            schema.fields[i].clone()
        }
        (None, _) => Field::new(None, &original.to_string(), data_type),
    };
    Output {
        expr: bound,
        field,
        alias: alias.map(str::to_string),
    }
}

fn reject_aggregates(e: &Expr, clause: &str) -> PResult<()> {
    let mut span = None;
    e.any(&|n| n.is_aggregate_call());
    find_first(e, &mut |n| {
        if let (true, Expr::Function { span: s, .. }) = (n.is_aggregate_call(), n) {
            span = Some(*s);
            true
        } else {
            false
        }
    });
    match span {
        Some(s) => Err(ParseError::new(
            format!("aggregate functions are not allowed in {clause}"),
            s,
        )),
        None => Ok(()),
    }
}

fn find_first(e: &Expr, f: &mut dyn FnMut(&Expr) -> bool) -> bool {
    f(e) || e.children().into_iter().any(|c| find_first(c, f))
}

fn first_sem_span(e: &Expr) -> Option<Span> {
    let mut out = None;
    find_first(e, &mut |n| match n {
        Expr::Sem { span, .. } => {
            out = Some(*span);
            true
        }
        _ => false,
    });
    out
}

/// Parses an `s'...'` (or, inside `sem_agg`, a plain string) literal and
/// binds its placeholders. `quote` is the length of the opening delimiter.
fn nl_literal(text: &str, span: Span, quote: usize, schema: &Schema) -> PResult<NlExpr> {
    let body_start = span.start + quote;
    let mut e = NlExpr::parse_at(text, span, body_start)?;
    bind_placeholders(&mut e, schema, body_start)?;
    Ok(e)
}

/// Resolves every placeholder of `e` against `schema`.
pub fn bind_placeholders(e: &mut NlExpr, schema: &Schema, body_start: usize) -> PResult<()> {
    for p in &mut e.placeholders {
        let span = Span::new(body_start + p.offset, body_start + p.offset + p.len);
        match schema.resolve(p.written.table_alias.as_deref(), &p.written.column) {
            Resolve::Found(i) => {
                let f = &schema.fields[i];
                p.bound = ColumnRef::new(f.qualifier.as_deref(), &f.name);
            }
            Resolve::Missing => {
                return Err(ParseError::new(
                    format!("unresolved column {} in placeholder", p.written),
                    span,
                ))
            }
            Resolve::Ambiguous => {
                return Err(ParseError::new(
                    format!("ambiguous column {} in placeholder", p.written),
                    span,
                ))
            }
        }
    }
    Ok(())
}

/// Binds every column reference in `e` to a field of `schema`. Semantic
/// literals and unknown functions are rejected.
pub fn bind(e: &Expr, schema: &Schema, span: Span) -> PResult<Expr> {
    let mut err = None;
    let out = e.try_transform(&mut |node| match node {
        Expr::Column(c) => Some(match schema.resolve(c.table_alias.as_deref(), &c.column) {
            Resolve::Found(i) => Some(column_of(&schema.fields[i])),
            Resolve::Missing => {
                err = Some(ParseError::new(format!("unknown column {c}"), span));
                None
            }
            Resolve::Ambiguous => {
                err = Some(ParseError::new(format!("ambiguous column {c}"), span));
                None
            }
        }),
        Expr::Sem { span: s, .. } => {
            err = Some(ParseError::new(
                "a natural-language expression is not supported in this position",
                *s,
            ));
            Some(None)
        }
        Expr::Function { name, span: s, .. }
            if !SCALAR_FUNCTIONS.contains(&name.as_str()) && !AGGREGATES.contains(&name.as_str()) =>
        {
            err = Some(ParseError::new(format!("unknown function {name}"), *s));
            Some(None)
        }
        _ => None,
    });
    out.ok_or_else(|| err.expect("bind aborted without an error"))
}

/// Parses and binds a standalone relational predicate, restricted to
/// comparisons, LIKE, IN lists, null tests and their boolean combinations.
pub fn bind_predicate(text: &str, schema: &Schema) -> PResult<Expr> {
    let e = parse_expr(text)?;
    let whole = Span::new(0, text.len());
    let allowed = !e.any(&|n| {
        matches!(
            n,
            Expr::Function { .. } | Expr::Sem { .. } | Expr::Between { .. }
        ) || matches!(n, Expr::Binary { op, .. } if matches!(op, BinaryOp::Plus | BinaryOp::Minus | BinaryOp::Multiply | BinaryOp::Divide | BinaryOp::Modulo))
    });
    if !allowed {
        return Err(ParseError::new("unsupported predicate form", whole));
    }
    if e.column_refs().is_empty() {
        return Err(ParseError::new("predicate references no column", whole));
    }
    let bound = bind(&e, schema, whole)?;
    if expr_type(&bound, schema) != DataType::Bool {
        return Err(ParseError::new("not a boolean predicate", whole));
    }
    Ok(bound)
}

pub(crate) fn column_of(f: &Field) -> Expr {
    Expr::Column(ColumnRef::new(f.qualifier.as_deref(), &f.name))
}

fn index_of_ref(schema: &Schema, c: &ColumnRef) -> usize {
    schema
        .index_of(c.table_alias.as_deref(), &c.column)
        .expect("bound column resolves")
}

fn resolves_ref(schema: &Schema, c: &ColumnRef) -> bool {
    schema.index_of(c.table_alias.as_deref(), &c.column).is_some()
}

/// True when every column of `e` resolves in `schema`.
pub fn resolves(schema: &Schema, e: &Expr) -> bool {
    e.column_refs().iter().all(|c| resolves_ref(schema, c))
}

/// Splits `l = r` into (left-side expr, right-side expr) when each side
/// references only one input.
fn equi_pair(e: &Expr, left: &Schema, right: &Schema) -> Option<(Expr, Expr)> {
    let Expr::Binary {
        op: BinaryOp::Eq,
        left: a,
        right: b,
    } = e
    else {
        return None;
    };
    let side = |x: &Expr, s: &Schema| !x.column_refs().is_empty() && resolves(s, x);
    if side(a, left) && side(b, right) {
        Some((*a.clone(), *b.clone()))
    } else if side(b, left) && side(a, right) {
        Some((*b.clone(), *a.clone()))
    } else {
        None
    }
}

/// Whether `push_down_filter` would move `pred` below `node` rather than
/// wrapping `node` itself.
fn can_descend(node: &PlanNode, pred: &Expr) -> bool {
    match &node.kind {
        NodeKind::RelFilter { .. } => can_descend(node.child(), pred),
        NodeKind::SemFilter { .. }
        | NodeKind::OrderBy { .. }
        | NodeKind::SemOrderBy { .. }
        | NodeKind::AdaptiveFilters { .. } => true,
        NodeKind::Fused { node: f, .. } => {
            f.first.kind == StepKind::Filter && f.second.kind == StepKind::Filter
        }
        NodeKind::SemProj { .. } => resolves(&node.child().schema, pred),
        NodeKind::RelProject { exprs } => substitute(pred, &node.schema, exprs).is_some(),
        NodeKind::HashJoin { join_type, .. } | NodeKind::SemJoin { join_type, .. } => {
            let (l, r) = (&node.children[0].schema, &node.children[1].schema);
            resolves(l, pred)
                || (*join_type != JoinKind::Semi && resolves(r, pred))
                || (matches!(node.kind, NodeKind::HashJoin { .. })
                    && *join_type != JoinKind::Semi
                    && equi_pair(pred, l, r).is_some())
        }
        _ => false,
    }
}

fn substitute(pred: &Expr, schema: &Schema, exprs: &[Expr]) -> Option<Expr> {
    pred.try_transform(&mut |e| match e {
        Expr::Column(c) => Some(
            schema
                .index_of(c.table_alias.as_deref(), &c.column)
                .map(|i| exprs[i].clone()),
        ),
        _ => None,
    })
}

/// Places a relational predicate at the lowest position where all of its
/// columns are available. Stacked filters keep their order: a new filter
/// goes above existing ones on the same input. An equality between the two
/// inputs of an inner join becomes a join key.
pub fn push_down_filter(mut node: PlanNode, pred: Expr, deduced_from: Option<String>) -> PlanNode {
    if !can_descend(&node, &pred) {
        return PlanNode::unary(
            NodeKind::RelFilter {
                predicate: pred,
                deduced_from,
            },
            node,
        );
    }
    match &mut node.kind {
        NodeKind::RelProject { exprs } => {
            let p = substitute(&pred, &node.schema, exprs).expect("checked by can_descend");
            let child = node.children.remove(0);
            node.children.push(push_down_filter(child, p, deduced_from));
        }
        NodeKind::HashJoin { .. } | NodeKind::SemJoin { .. } => {
            let (l, r) = (&node.children[0].schema, &node.children[1].schema);
            if resolves(l, &pred) {
                let child = node.children.remove(0);
                node.children.insert(0, push_down_filter(child, pred, deduced_from));
            } else if resolves(r, &pred) {
                let child = node.children.remove(1);
                node.children.push(push_down_filter(child, pred, deduced_from));
            } else {
                let (a, b) = equi_pair(&pred, l, r).expect("checked by can_descend");
                if let NodeKind::HashJoin {
                    join_type,
                    left_keys,
                    right_keys,
                    ..
                } = &mut node.kind
                {
                    left_keys.push(a);
                    right_keys.push(b);
                    if *join_type == JoinKind::Cross {
                        *join_type = JoinKind::Inner;
                    }
                }
            }
        }
        _ => {
            let child = node.children.remove(0);
            node.children.insert(0, push_down_filter(child, pred, deduced_from));
        }
    }
    node
}

/// Static result type of a bound expression.
pub fn expr_type(e: &Expr, schema: &Schema) -> DataType {
    match e {
        Expr::Column(c) => schema
            .index_of(c.table_alias.as_deref(), &c.column)
            .map_or(DataType::Text, |i| schema.fields[i].data_type),
        Expr::Literal(v) => v.data_type().unwrap_or(DataType::Text),
        Expr::Sem { .. } => DataType::Text,
        Expr::Binary { op, left, right } => match op {
            BinaryOp::And | BinaryOp::Or => DataType::Bool,
            op if op.is_comparison() => DataType::Bool,
            BinaryOp::Divide => DataType::Float64,
            _ => {
                let (a, b) = (expr_type(left, schema), expr_type(right, schema));
                if a == DataType::Int64 && b == DataType::Int64 {
                    DataType::Int64
                } else {
                    DataType::Float64
                }
            }
        },
        Expr::Unary { op, expr } => match op {
            super::expr::UnaryOp::Not => DataType::Bool,
            super::expr::UnaryOp::Neg => expr_type(expr, schema),
        },
        Expr::IsNull { .. } | Expr::Like { .. } | Expr::InList { .. } | Expr::Between { .. } => {
            DataType::Bool
        }
        Expr::Function { name, args, .. } => match name.as_str() {
            "length" | "count" => DataType::Int64,
            "lower" | "upper" | "trim" | "sem_agg" => DataType::Text,
            "avg" | "round" => DataType::Float64,
            _ => args.first().map_or(DataType::Text, |a| expr_type(a, schema)),
        },
    }
}

fn agg_type(f: &AggFunc, input: &Schema) -> DataType {
    match f {
        AggFunc::CountStar | AggFunc::Count(_) => DataType::Int64,
        AggFunc::Avg(_) => DataType::Float64,
        AggFunc::Sum(e) => match expr_type(e, input) {
            DataType::Int64 => DataType::Int64,
            _ => DataType::Float64,
        },
        AggFunc::Min(e) | AggFunc::Max(e) => expr_type(e, input),
        AggFunc::Sem { .. } => DataType::Text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Table;
    use crate::sql::{explain, parse};

    fn catalog() -> Catalog {
        let cat = Catalog::new();
        cat.register(
            Table::from_columns(
                "user_reviews",
                vec![
                    ("app", DataType::Text, vec!["a".into()]),
                    ("translated_review", DataType::Text, vec!["good".into()]),
                ],
            )
            .unwrap(),
        );
        cat.register(
            Table::from_columns(
                "playstore",
                vec![
                    ("app", DataType::Text, vec!["a".into()]),
                    ("category", DataType::Text, vec!["ART_AND_DESIGN".into()]),
                    ("type", DataType::Text, vec!["Free".into()]),
                ],
            )
            .unwrap(),
        );
        cat.register(
            Table::from_columns("t", vec![("c", DataType::Text, vec!["x".into()])]).unwrap(),
        );
        cat
    }

    const RUNNING: &str = "SELECT ur.app, COUNT(*) AS positive_and_valid_count
        FROM user_reviews AS ur INNER JOIN playstore AS p ON ur.app = p.app
        WHERE p.category = 'ART_AND_DESIGN' AND p.type = 'Free'
          AND s'{translated_review} is a valid user review'
          AND s'{translated_review} is a positive user review'
        GROUP BY ur.app;";

    #[test]
    fn running_example_plan() {
        let plan = parse(RUNNING, &catalog()).unwrap();
        let count = |name: &str| plan.count(|n| n.kind.name() == name);
        assert_eq!(count("Scan"), 2);
        assert_eq!(count("HashJoin"), 1);
        assert_eq!(count("RelFilter"), 2);
        assert_eq!(count("SemFilter"), 2);
        assert_eq!(count("GroupBy"), 1);
        let mut bound = Vec::new();
        plan.walk(&mut |n| {
            if let NodeKind::SemFilter { expr, .. } = &n.kind {
                bound.push(expr.placeholders[0].bound.clone());
            }
        });
        assert!(bound.iter().all(|c| *c == ColumnRef::new(Some("ur"), "translated_review")));
    }

    #[test]
    fn single_semantic_filter() {
        let plan = parse("SELECT * FROM t WHERE s'{c} is positive'", &catalog()).unwrap();
        assert_eq!(plan.kind.name(), "SemFilter");
        assert_eq!(plan.child().kind.name(), "Scan");
        let NodeKind::SemFilter { expr, .. } = &plan.kind else {
            unreachable!()
        };
        assert_eq!(expr.placeholders.len(), 1);
        assert_eq!(expr.placeholders[0].bound.column, "c");
        assert_eq!(explain(&plan), "SemFilter('{c} is positive')\n  Scan(t)\n");
    }

    #[test]
    fn unclosed_placeholder_names_its_span() {
        let src = "SELECT * FROM t WHERE s'{c is open'";
        let err = parse(src, &catalog()).unwrap_err();
        let crate::Error::Parse(e) = err else {
            panic!("expected parse error")
        };
        assert_eq!(&src[e.span.start..e.span.start + 1], "{");
    }

    #[test]
    fn unresolved_placeholder() {
        let src = "SELECT * FROM t WHERE s'{nope} is positive'";
        let crate::Error::Parse(e) = parse(src, &catalog()).unwrap_err() else {
            panic!()
        };
        assert_eq!(&src[e.span.start..e.span.end], "{nope}");
    }

    #[test]
    fn semantic_literal_in_unsupported_position() {
        for q in [
            "SELECT * FROM t WHERE NOT s'{c} is positive'",
            "SELECT * FROM t WHERE c = 'x' OR s'{c} is positive'",
            "SELECT length(s'{c}') FROM t",
            "SELECT c FROM t GROUP BY s'{c}'",
        ] {
            assert!(parse(q, &catalog()).is_err(), "{q}");
        }
    }

    #[test]
    fn sem_agg_with_group_by() {
        let cat = Catalog::new();
        cat.register(
            Table::from_columns(
                "Paper",
                vec![
                    ("ConferenceId", DataType::Int64, vec![Value::Int(1)]),
                    ("Keyword", DataType::Text, vec!["x".into()]),
                ],
            )
            .unwrap(),
        );
        let plan = parse(
            "SELECT sem_agg(s'Summarize the major interdisciplinary trends in {Keyword}') FROM Paper GROUP BY ConferenceId",
            &cat,
        )
        .unwrap();
        let gb = plan.child();
        let NodeKind::GroupBy { aggregates, .. } = &gb.kind else {
            panic!("expected GroupBy, got {}", gb.kind.name())
        };
        assert_eq!(aggregates.len(), 1);
        let AggFunc::Sem { expr, .. } = &aggregates[0].func else {
            panic!()
        };
        assert_eq!(expr.placeholders.len(), 1);
        assert_eq!(plan.semantic_operator_count(), 1);
    }

    #[test]
    fn having_alias_reuses_the_semantic_aggregate() {
        let cat = Catalog::new();
        cat.register(
            Table::from_columns(
                "Paper",
                vec![
                    ("ConferenceId", DataType::Int64, vec![Value::Int(1)]),
                    ("Keyword", DataType::Text, vec!["x".into()]),
                ],
            )
            .unwrap(),
        );
        let plan = parse(
            "SELECT ConferenceId, sem_agg('Summarize {Keyword}', Keyword) AS trends FROM Paper p
             GROUP BY ConferenceId HAVING COUNT(*) >= 3 AND trends IS NOT NULL",
            &cat,
        )
        .unwrap();
        assert_eq!(plan.semantic_operator_count(), 1);
        assert_eq!(plan.count(|n| n.kind.name() == "RelFilter"), 2);
    }

    #[test]
    fn one_sided_join_condition_becomes_a_filter() {
        let plan = parse(
            "SELECT ur.app FROM user_reviews ur JOIN playstore p
             ON ur.app = p.app AND s'{p.category} is artistic'",
            &catalog(),
        )
        .unwrap();
        assert_eq!(plan.count(|n| n.kind.name() == "SemJoin"), 0);
        assert_eq!(plan.count(|n| n.kind.name() == "SemFilter"), 1);
        let two_sided = parse(
            "SELECT * FROM user_reviews ur JOIN playstore p ON s'{ur.translated_review} fits {p.category}'",
            &catalog(),
        )
        .unwrap();
        assert_eq!(two_sided.kind.name(), "SemJoin");
        assert_eq!(two_sided.children.len(), 2);
    }

    #[test]
    fn semantic_projection_alias_is_visible_to_later_items() {
        let plan = parse(
            "SELECT s'Summarize {c}' AS plot, s'Classify {plot}' AS category FROM t",
            &catalog(),
        )
        .unwrap();
        assert_eq!(plan.count(|n| n.kind.name() == "SemProj"), 2);
        assert_eq!(plan.schema.fields.len(), 2);
    }

    #[test]
    fn cross_join_equality_selects_join_keys() {
        let plan = parse(
            "SELECT ur.app FROM user_reviews ur, playstore p WHERE ur.app = p.app",
            &catalog(),
        )
        .unwrap();
        let mut keys = 0;
        plan.walk(&mut |n| {
            if let NodeKind::HashJoin { left_keys, join_type, .. } = &n.kind {
                keys = left_keys.len();
                assert_eq!(*join_type, JoinKind::Inner);
            }
        });
        assert_eq!(keys, 1);
    }

    #[test]
    fn deduced_predicate_grammar() {
        let schema = catalog().get("user_reviews").unwrap().schema.clone();
        assert!(bind_predicate("Translated_Review != 'nan'", &schema).is_ok());
        assert!(bind_predicate("translated_review LIKE '%good%'", &schema).is_ok());
        assert!(bind_predicate("Rating > 10", &schema).is_err());
        assert!(bind_predicate("length(app) > 3", &schema).is_err());
        assert!(bind_predicate("app", &schema).is_err());
    }
}
