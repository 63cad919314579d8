//! Fusion of two consecutive unary semantic operators into one call per
//! tuple.

use crate::sql::{ColumnRef, FusedNode, FusedStep, NlExpr, NodeKind, PlanNode, StepKind};

/// The fusable step of a `SemFilter` or `SemProj` node.
pub fn as_step(node: &PlanNode) -> Option<FusedStep> {
    match &node.kind {
        NodeKind::SemFilter { expr, .. } => Some(FusedStep {
            kind: StepKind::Filter,
            expr: expr.clone(),
            alias: None,
        }),
        NodeKind::SemProj { expr, alias, .. } => Some(FusedStep {
            kind: StepKind::Proj,
            expr: expr.clone(),
            alias: Some(alias.clone()),
        }),
        _ => None,
    }
}

/// Fuses `lower` (evaluated first) with `upper`. Filter-first pairs must
/// mention a common column; projection-first pairs need `upper` to read
/// the projected alias.
pub fn fuse(lower: &PlanNode, upper: &PlanNode) -> Option<FusedNode> {
    fuse_steps(as_step(lower)?, as_step(upper)?)
}

pub fn fuse_steps(first: FusedStep, second: FusedStep) -> Option<FusedNode> {
    let related = match (&first.kind, &first.alias) {
        (StepKind::Proj, Some(alias)) => second.expr.mentions(&ColumnRef::bare(alias)),
        _ => {
            let cols = first.expr.columns();
            second.expr.columns().iter().any(|c| cols.iter().any(|d| d.same_as(c)))
        }
    };
    related.then(|| combine(first, second, None))
}

/// Fuses two filters regardless of shared columns, as adaptive execution
/// does for correlated pairs.
pub fn fuse_filters(first: &NlExpr, second: &NlExpr, est_selectivity: Option<f64>) -> FusedNode {
    let step = |e: &NlExpr| FusedStep {
        kind: StepKind::Filter,
        expr: e.clone(),
        alias: None,
    };
    combine(step(first), step(second), est_selectivity)
}

fn combine(first: FusedStep, second: FusedStep, est_selectivity: Option<f64>) -> FusedNode {
    let text = if first.kind == StepKind::Filter && second.kind == StepKind::Filter {
        shared_subject(&first.expr.template, &second.expr.template)
    } else {
        None
    }
    .unwrap_or_else(|| {
        format!(
            "Step 1: {}. Step 2: {}.",
            first.expr.template.trim().trim_end_matches('.'),
            second.expr.template.trim().trim_end_matches('.')
        )
    });
    let combined = rebind(&text, &[&first.expr, &second.expr]);
    FusedNode {
        first,
        second,
        combined,
        est_selectivity,
    }
}

/// `"{x} is valid"` and `"{x} is positive"` become `"{x} is valid and
/// positive"` when the leading words agree.
fn shared_subject(a: &str, b: &str) -> Option<String> {
    let wa: Vec<&str> = a.split_whitespace().collect();
    let wb: Vec<&str> = b.split_whitespace().collect();
    let n = wa.iter().zip(&wb).take_while(|(x, y)| x == y).count();
    if n == 0 || n == wa.len() || n == wb.len() {
        return None;
    }
    Some(format!(
        "{} {} and {}",
        wa[..n].join(" "),
        wa[n..].join(" ").trim_end_matches('.'),
        wb[n..].join(" ")
    ))
}

fn rebind(text: &str, sources: &[&NlExpr]) -> NlExpr {
    let mut e = NlExpr::parse(text).expect("combined template reuses valid placeholders");
    for p in &mut e.placeholders {
        if let Some(src) = sources
            .iter()
            .flat_map(|s| &s.placeholders)
            .find(|q| q.written == p.written)
        {
            p.bound = src.bound.clone();
        }
    }
    e.span = sources[0].span.to(sources[sources.len() - 1].span);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Schema;
    use crate::sql::EvalMode;

    fn node(kind: NodeKind) -> PlanNode {
        PlanNode::new(kind, vec![], Schema::default())
    }

    fn filter(t: &str) -> PlanNode {
        node(NodeKind::SemFilter {
            expr: NlExpr::parse(t).unwrap(),
            mode: EvalMode::PerTuple,
        })
    }

    fn proj(t: &str, alias: &str) -> PlanNode {
        node(NodeKind::SemProj {
            expr: NlExpr::parse(t).unwrap(),
            alias: alias.into(),
            mode: EvalMode::PerTuple,
        })
    }

    #[test]
    fn shared_subject_merges_predicates() {
        let f = fuse(
            &filter("{translated_review} is valid"),
            &filter("{translated_review} is positive"),
        )
        .unwrap();
        assert_eq!(f.combined.template, "{translated_review} is valid and positive");
        assert_eq!(f.combined.placeholders.len(), 1);
    }

    #[test]
    fn projection_then_filter_on_alias() {
        let f = fuse(&proj("the plot of {title}", "plot"), &filter("{plot} is about space")).unwrap();
        assert_eq!(f.combined.template, "Step 1: the plot of {title}. Step 2: {plot} is about space.");
        assert_eq!(f.first.kind, StepKind::Proj);
        assert!(fuse(&proj("the plot of {title}", "plot"), &filter("{title} is short")).is_none());
    }

    #[test]
    fn disjoint_filters_do_not_fuse() {
        assert!(fuse(&filter("{a} is red"), &filter("{b} is blue")).is_none());
    }
}
