use serde::Serialize;

use super::ast::JoinKind;
use super::expr::Expr;
use super::nl::NlExpr;
use crate::catalog::Schema;

/// How a semantic operator packs tuples into LLM calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    PerTuple,
    Batched(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Filter,
    Proj,
}

/// One constituent of a fused node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedStep {
    pub kind: StepKind,
    pub expr: NlExpr,
    /// Output column for a projection step.
    pub alias: Option<String>,
}

/// Two consecutive unary semantic operators evaluated with one call per
/// tuple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedNode {
    pub first: FusedStep,
    pub second: FusedStep,
    /// The merged instruction sent to the model.
    pub combined: NlExpr,
    /// min of the two selectivities when both are known.
    pub est_selectivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AggFunc {
    CountStar,
    Count(Expr),
    Sum(Expr),
    Avg(Expr),
    Min(Expr),
    Max(Expr),
    /// `sem_agg(template [, column])`
    Sem { expr: NlExpr, column: Option<Expr> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub func: AggFunc,
    /// Output column name.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NodeKind {
    Scan {
        table: String,
        alias: String,
    },
    RelFilter {
        predicate: Expr,
        /// Template of the semantic filter this predicate was deduced from.
        deduced_from: Option<String>,
    },
    RelProject {
        exprs: Vec<Expr>,
    },
    /// Equi-join on `left_keys = right_keys` plus an optional residual
    /// predicate; with no keys it is a nested-loop join.
    HashJoin {
        join_type: JoinKind,
        left_keys: Vec<Expr>,
        right_keys: Vec<Expr>,
        residual: Option<Expr>,
    },
    GroupBy {
        keys: Vec<Expr>,
        aggregates: Vec<Aggregate>,
    },
    OrderBy {
        keys: Vec<(Expr, bool)>,
    },
    Limit {
        count: u64,
    },
    SemFilter {
        expr: NlExpr,
        mode: EvalMode,
    },
    SemProj {
        expr: NlExpr,
        alias: String,
        mode: EvalMode,
    },
    SemJoin {
        expr: NlExpr,
        join_type: JoinKind,
        /// Relational part of the ON clause, checked before the model.
        condition: Option<Expr>,
        mode: EvalMode,
    },
    SemOrderBy {
        expr: NlExpr,
        descending: bool,
    },
    Fused {
        node: FusedNode,
        mode: EvalMode,
    },
    /// A run of consecutive semantic filters handed to adaptive execution.
    AdaptiveFilters {
        filters: Vec<NlExpr>,
    },
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Scan { .. } => "Scan",
            NodeKind::RelFilter { .. } => "RelFilter",
            NodeKind::RelProject { .. } => "RelProject",
            NodeKind::HashJoin { .. } => "HashJoin",
            NodeKind::GroupBy { .. } => "GroupBy",
            NodeKind::OrderBy { .. } => "OrderBy",
            NodeKind::Limit { .. } => "Limit",
            NodeKind::SemFilter { .. } => "SemFilter",
            NodeKind::SemProj { .. } => "SemProj",
            NodeKind::SemJoin { .. } => "SemJoin",
            NodeKind::SemOrderBy { .. } => "SemOrderBy",
            NodeKind::Fused { .. } => "Fused",
            NodeKind::AdaptiveFilters { .. } => "AdaptiveFilters",
        }
    }

    /// The natural-language expression of a single-expression semantic
    /// node.
    pub fn nl_expr(&self) -> Option<&NlExpr> {
        match self {
            NodeKind::SemFilter { expr, .. }
            | NodeKind::SemProj { expr, .. }
            | NodeKind::SemJoin { expr, .. }
            | NodeKind::SemOrderBy { expr, .. } => Some(expr),
            _ => None,
        }
    }

    pub fn nl_expr_mut(&mut self) -> Option<&mut NlExpr> {
        match self {
            NodeKind::SemFilter { expr, .. }
            | NodeKind::SemProj { expr, .. }
            | NodeKind::SemJoin { expr, .. }
            | NodeKind::SemOrderBy { expr, .. } => Some(expr),
            _ => None,
        }
    }

    pub fn is_semantic(&self) -> bool {
        self.nl_expr().is_some()
            || matches!(self, NodeKind::Fused { .. } | NodeKind::AdaptiveFilters { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanNode {
    pub kind: NodeKind,
    pub children: Vec<PlanNode>,
    /// Output schema of this node.
    pub schema: Schema,
}

impl PlanNode {
    pub fn new(kind: NodeKind, children: Vec<PlanNode>, schema: Schema) -> Self {
        PlanNode {
            kind,
            children,
            schema,
        }
    }

    /// Wraps `child` in a node that keeps its schema (filters, sorts, limits).
    pub fn unary(kind: NodeKind, child: PlanNode) -> Self {
        let schema = child.schema.clone();
        PlanNode::new(kind, vec![child], schema)
    }

    pub fn child(&self) -> &PlanNode {
        &self.children[0]
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a PlanNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut PlanNode)) {
        f(self);
        for c in &mut self.children {
            c.walk_mut(f);
        }
    }

    pub fn count(&self, pred: impl Fn(&PlanNode) -> bool) -> usize {
        let mut n = 0;
        self.walk(&mut |node| {
            if pred(node) {
                n += 1;
            }
        });
        n
    }

    /// Number of semantic operators: semantic nodes plus `sem_agg`
    /// aggregates inside GroupBy nodes. Fused nodes count for two.
    pub fn semantic_operator_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |node| {
            n += match &node.kind {
                NodeKind::GroupBy { aggregates, .. } => aggregates
                    .iter()
                    .filter(|a| matches!(a.func, AggFunc::Sem { .. }))
                    .count(),
                NodeKind::Fused { .. } => 2,
                NodeKind::AdaptiveFilters { filters } => filters.len(),
                k if k.is_semantic() => 1,
                _ => 0,
            }
        });
        n
    }

    /// Every natural-language expression in the plan, in pre-order.
    pub fn nl_exprs(&self) -> Vec<&NlExpr> {
        let mut out = Vec::new();
        self.walk(&mut |node| match &node.kind {
            NodeKind::GroupBy { aggregates, .. } => {
                for a in aggregates {
                    if let AggFunc::Sem { expr, .. } = &a.func {
                        out.push(expr);
                    }
                }
            }
            NodeKind::Fused { node, .. } => {
                out.push(&node.first.expr);
                out.push(&node.second.expr);
            }
            NodeKind::AdaptiveFilters { filters } => out.extend(filters.iter()),
            k => out.extend(k.nl_expr()),
        });
        out
    }
}
