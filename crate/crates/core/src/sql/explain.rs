use std::fmt::Write;

use super::ast::JoinKind;
use super::nl::NlExpr;
use super::plan::{AggFunc, EvalMode, FusedStep, NodeKind, PlanNode, StepKind};

/// Renders a plan as an indented tree, root first, two spaces per level.
pub fn explain(plan: &PlanNode) -> String {
    let mut out = String::new();
    render(plan, 0, &mut out);
    out
}

fn render(node: &PlanNode, depth: usize, out: &mut String) {
    let _ = writeln!(out, "{}{}", "  ".repeat(depth), line(node));
    for c in &node.children {
        render(c, depth + 1, out);
    }
}

fn quoted(e: &NlExpr) -> String {
    format!("'{}'", e.template.replace('\'', "''"))
}

fn mode(m: &EvalMode) -> String {
    match m {
        EvalMode::PerTuple => String::new(),
        EvalMode::Batched(k) => format!(" [batch={k}]"),
    }
}

fn join_kind(k: JoinKind) -> &'static str {
    match k {
        JoinKind::Inner => "INNER",
        JoinKind::Semi => "SEMI",
        JoinKind::Cross => "CROSS",
    }
}

fn step(s: &FusedStep) -> String {
    match s.kind {
        StepKind::Filter => format!("filter {}", quoted(&s.expr)),
        StepKind::Proj => format!(
            "proj {} AS {}",
            quoted(&s.expr),
            s.alias.as_deref().unwrap_or("?")
        ),
    }
}

fn line(node: &PlanNode) -> String {
    match &node.kind {
        NodeKind::Scan { table, alias } if table == alias => format!("Scan({table})"),
        NodeKind::Scan { table, alias } => format!("Scan({table} AS {alias})"),
        NodeKind::RelFilter {
            predicate,
            deduced_from,
        } => match deduced_from {
            Some(t) => format!("RelFilter({predicate}) [deduced from '{}']", t.replace('\'', "''")),
            None => format!("RelFilter({predicate})"),
        },
        NodeKind::RelProject { exprs } => {
            let items: Vec<String> = exprs
                .iter()
                .zip(&node.schema.fields)
                .map(|(e, f)| {
                    let shown = e.to_string();
                    if shown == f.qualified_name() || shown == f.name {
                        shown
                    } else {
                        format!("{shown} AS {}", f.name)
                    }
                })
                .collect();
            format!("RelProject({})", items.join(", "))
        }
        NodeKind::HashJoin {
            join_type,
            left_keys,
            right_keys,
            residual,
        } => {
            let mut parts = vec![join_kind(*join_type).to_string()];
            for (l, r) in left_keys.iter().zip(right_keys) {
                parts.push(format!("{l} = {r}"));
            }
            if let Some(r) = residual {
                parts.push(r.to_string());
            }
            format!("HashJoin({})", parts.join(", "))
        }
        NodeKind::GroupBy { keys, aggregates } => {
            let keys: Vec<String> = keys.iter().map(ToString::to_string).collect();
            let aggs: Vec<String> = aggregates
                .iter()
                .map(|a| {
                    let f = match &a.func {
                        AggFunc::CountStar => "count(*)".to_string(),
                        AggFunc::Count(e) => format!("count({e})"),
                        AggFunc::Sum(e) => format!("sum({e})"),
                        AggFunc::Avg(e) => format!("avg({e})"),
                        AggFunc::Min(e) => format!("min({e})"),
                        AggFunc::Max(e) => format!("max({e})"),
                        AggFunc::Sem { expr, column: None } => format!("sem_agg({})", quoted(expr)),
                        AggFunc::Sem {
                            expr,
                            column: Some(c),
                        } => format!("sem_agg({}, {c})", quoted(expr)),
                    };
                    format!("{f} AS {}", a.name)
                })
                .collect();
            if aggs.is_empty() {
                format!("GroupBy(keys=[{}])", keys.join(", "))
            } else {
                format!("GroupBy(keys=[{}], aggs=[{}])", keys.join(", "), aggs.join(", "))
            }
        }
        NodeKind::OrderBy { keys } => {
            let keys: Vec<String> = keys
                .iter()
                .map(|(e, desc)| format!("{e} {}", if *desc { "DESC" } else { "ASC" }))
                .collect();
            format!("OrderBy({})", keys.join(", "))
        }
        NodeKind::Limit { count } => format!("Limit({count})"),
        NodeKind::SemFilter { expr, mode: m } => format!("SemFilter({}){}", quoted(expr), mode(m)),
        NodeKind::SemProj {
            expr,
            alias,
            mode: m,
        } => format!("SemProj({} AS {alias}){}", quoted(expr), mode(m)),
        NodeKind::SemJoin {
            expr,
            join_type,
            condition,
            mode: m,
        } => match condition {
            Some(c) => format!(
                "SemJoin({}, {}, {c}){}",
                join_kind(*join_type),
                quoted(expr),
                mode(m)
            ),
            None => format!("SemJoin({}, {}){}", join_kind(*join_type), quoted(expr), mode(m)),
        },
        NodeKind::SemOrderBy { expr, descending } => format!(
            "SemOrderBy({} {})",
            quoted(expr),
            if *descending { "DESC" } else { "ASC" }
        ),
        NodeKind::Fused { node: f, mode: m } => format!(
            "Fused({}; {}) as {}{}",
            step(&f.first),
            step(&f.second),
            quoted(&f.combined),
            mode(m)
        ),
        NodeKind::AdaptiveFilters { filters } => {
            let fs: Vec<String> = filters.iter().map(quoted).collect();
            format!("AdaptiveFilters({})", fs.join(", "))
        }
    }
}
