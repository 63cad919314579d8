//! Turns a logical plan into the one the engine runs: adaptive filter
//! runs, fused operator pairs and batched evaluation modes.

use crate::sql::{EvalMode, Expr, NlExpr, NodeKind, PlanNode};

use super::fusion::fuse;
use super::EngineConfig;

pub fn physical_plan(plan: &PlanNode, cfg: &EngineConfig) -> PlanNode {
    let mut out = rewrite(plan.clone(), cfg);
    if cfg.batching {
        let mode = EvalMode::Batched(cfg.batch_size.max(1));
        out.walk_mut(&mut |n| match &mut n.kind {
            NodeKind::SemFilter { mode: m, .. }
            | NodeKind::SemProj { mode: m, .. }
            | NodeKind::SemJoin { mode: m, .. }
            | NodeKind::Fused { mode: m, .. } => *m = mode,
            _ => {}
        });
    }
    out
}

fn is_sem_filter(n: &PlanNode) -> bool {
    matches!(n.kind, NodeKind::SemFilter { .. })
}

fn is_unary_semantic(n: &PlanNode) -> bool {
    matches!(n.kind, NodeKind::SemFilter { .. } | NodeKind::SemProj { .. })
}

/// The filter expression rebound below its child when the node is a
/// semantic filter over a projection that only passes columns through.
fn sinkable(node: &PlanNode) -> Option<NlExpr> {
    let NodeKind::SemFilter { expr, .. } = &node.kind else {
        return None;
    };
    let proj = node.children.first()?;
    let NodeKind::RelProject { exprs } = &proj.kind else {
        return None;
    };
    let mut moved = expr.clone();
    for p in &mut moved.placeholders {
        let i = proj.schema.index_of(p.bound.table_alias.as_deref(), &p.bound.column)?;
        let Expr::Column(c) = &exprs[i] else {
            return None;
        };
        p.bound = c.clone();
    }
    Some(moved)
}

/// Moves a semantic filter below a pass-through projection, so it can meet
/// the operator underneath.
fn sink_filter(mut node: PlanNode, moved: NlExpr) -> PlanNode {
    let NodeKind::SemFilter { mode, .. } = node.kind else {
        unreachable!("checked by sinkable")
    };
    let mut proj = node.children.pop().expect("unary node");
    let input = proj.children.pop().expect("unary node");
    proj.children.push(PlanNode::unary(NodeKind::SemFilter { expr: moved, mode }, input));
    proj
}

fn rewrite(node: PlanNode, cfg: &EngineConfig) -> PlanNode {
    if let Some(moved) = sinkable(&node) {
        return rewrite(sink_filter(node, moved), cfg);
    }
    let mut node = node;
    if cfg.aqe && is_sem_filter(&node) && is_sem_filter(node.child()) {
        // Collect the run top-down, then list it in evaluation order.
        let mut filters = Vec::new();
        let mut cur = node;
        while is_sem_filter(&cur) {
            let NodeKind::SemFilter { expr, .. } = cur.kind else {
                unreachable!()
            };
            filters.push(expr);
            cur = cur.children.into_iter().next().expect("filter has a child");
        }
        filters.reverse();
        let input = rewrite(cur, cfg);
        return PlanNode::unary(NodeKind::AdaptiveFilters { filters }, input);
    }
    if cfg.fusion && is_unary_semantic(&node) && is_unary_semantic(node.child()) {
        let both_filters = is_sem_filter(&node) && is_sem_filter(node.child());
        if !(both_filters && cfg.aqe) {
            if let Some(fused) = fuse(node.child(), &node) {
                let schema = node.schema.clone();
                let lower = node.children.pop().expect("unary node");
                let input = lower.children.into_iter().next().expect("unary node");
                return PlanNode::new(
                    NodeKind::Fused {
                        node: fused,
                        mode: EvalMode::PerTuple,
                    },
                    vec![rewrite(input, cfg)],
                    schema,
                );
            }
        }
    }
    node.children = node.children.into_iter().map(|c| rewrite(c, cfg)).collect();
    node
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, Table};
    use crate::sql::{explain, parse};
    use crate::value::DataType;

    fn catalog() -> Catalog {
        let c = Catalog::new();
        c.register(
            Table::from_columns(
                "t",
                vec![
                    ("a", DataType::Text, vec!["x".into()]),
                    ("b", DataType::Text, vec!["y".into()]),
                ],
            )
            .unwrap(),
        );
        c
    }

    fn cfg(aqe: bool, fusion: bool, batching: bool) -> EngineConfig {
        EngineConfig {
            aqe,
            fusion,
            batching,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn filter_runs_become_adaptive() {
        let plan = parse("SELECT * FROM t WHERE s'{a} is p' AND s'{a} is q' AND s'{b} is r'", &catalog()).unwrap();
        let p = physical_plan(&plan, &cfg(true, true, true));
        assert_eq!(
            explain(&p),
            "AdaptiveFilters('{a} is p', '{a} is q', '{b} is r')\n  Scan(t)\n"
        );
        let p = physical_plan(&plan, &cfg(false, true, false));
        assert_eq!(
            explain(&p),
            "SemFilter('{b} is r')\n  Fused(filter '{a} is p'; filter '{a} is q') as '{a} is p and q'\n    Scan(t)\n"
        );
        let p = physical_plan(&plan, &cfg(false, false, true));
        assert_eq!(p.count(|n| n.kind.name() == "SemFilter"), 3);
        assert!(explain(&p).contains("[batch=16]"));
    }

    #[test]
    fn projection_and_filter_fuse() {
        let plan = parse("SELECT s'summary of {a}' AS sm FROM t WHERE s'{a} is p'", &catalog()).unwrap();
        let p = physical_plan(&plan, &cfg(true, true, false));
        assert!(explain(&p).contains("Fused(filter '{a} is p'; proj 'summary of {a}' AS sm)"), "{}", explain(&p));
        assert_eq!(p.semantic_operator_count(), plan.semantic_operator_count());
    }

    #[test]
    fn filter_sinks_through_passthrough_projection() {
        let q = "SELECT b FROM (SELECT b, s'summary of {a}' AS sm FROM t) q WHERE s'{sm} is short'";
        let plan = parse(q, &catalog()).unwrap();
        let p = physical_plan(&plan, &cfg(false, true, false));
        let text = explain(&p);
        assert!(text.contains("Fused(proj 'summary of {a}' AS sm; filter '{sm} is short')"), "{text}");
        let p = physical_plan(&plan, &cfg(false, false, false));
        let text = explain(&p);
        assert!(text.find("RelProject").unwrap() < text.find("SemFilter").unwrap(), "{text}");
    }
}
