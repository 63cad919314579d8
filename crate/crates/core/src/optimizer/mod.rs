//! Rewrites of natural-language expressions before execution: compression
//! of verbose templates, and deduction of relational predicates that are
//! necessary conditions of a semantic filter, checked by a second model
//! call and pushed down to prune rows early.

mod compress;
mod deduce;

use serde::Serialize;

use crate::catalog::{column_stats, Catalog, ColumnStats, DEFAULT_STATS_SAMPLE};
use crate::engine::CallStats;
use crate::llm::{Gateway, TokenUsage};
use crate::sql::{push_down_filter, AggFunc, ColumnRef, NlExpr, NodeKind, PlanNode};

pub use compress::{accept_rewrite, compress_expression, Compression, COMPRESS_SYSTEM};
pub use deduce::{
    deduce_predicates, deduce_user, parse_deduction, verify_necessary, verify_user, DeducedPredicate,
    Deduction, DEDUCE_ENTIRE_NOTE, DEDUCE_SYSTEM, VERIFY_SYSTEM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OptimizerFlags {
    pub compress: bool,
    pub deduce: bool,
}

impl Default for OptimizerFlags {
    fn default() -> Self {
        OptimizerFlags {
            compress: true,
            deduce: true,
        }
    }
}

impl OptimizerFlags {
    pub fn off() -> Self {
        OptimizerFlags {
            compress: false,
            deduce: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeductionRecord {
    pub source: String,
    /// Columns whose statistics went into the prompt.
    pub columns: Vec<String>,
    pub predicates: Vec<DeducedPredicate>,
    pub dropped: Vec<String>,
    pub entire_requested: bool,
    /// The semantic filter was removed.
    pub entire_applied: bool,
    /// Set when deduction or verification fell back to the original filter.
    pub fallback: Option<String>,
}

impl DeductionRecord {
    pub fn applied(&self) -> impl Iterator<Item = &DeducedPredicate> {
        self.predicates.iter().filter(|p| p.verified)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OptimizerReport {
    pub compressions: Vec<Compression>,
    pub deductions: Vec<DeductionRecord>,
    pub aux_calls: u64,
    pub usage: TokenUsage,
    pub cost: f64,
}

impl OptimizerReport {
    pub fn is_empty(&self) -> bool {
        self.compressions.is_empty() && self.deductions.is_empty() && self.aux_calls == 0
    }
}

struct Pass<'a> {
    catalog: &'a Catalog,
    gateway: &'a Gateway,
    report: OptimizerReport,
    calls: CallStats,
    next_id: usize,
}

impl Pass<'_> {
    fn label(&mut self, what: &str) -> String {
        self.next_id += 1;
        format!("optimizer:{what}#{}", self.next_id)
    }

    fn compress(&mut self, e: &mut NlExpr) {
        let label = self.label("compress");
        let (out, record, stats) = compress_expression(self.gateway, e, &label);
        *e = out;
        self.report.compressions.push(record);
        self.calls += stats;
    }

    fn compress_all(&mut self, node: &mut PlanNode) {
        if let Some(e) = node.kind.nl_expr_mut() {
            self.compress(e);
        }
        if let NodeKind::GroupBy { aggregates, .. } = &mut node.kind {
            for a in aggregates {
                if let AggFunc::Sem { expr, .. } = &mut a.func {
                    self.compress(expr);
                }
            }
        }
        for c in &mut node.children {
            self.compress_all(c);
        }
    }

    fn deduce_all(&mut self, mut node: PlanNode) -> PlanNode {
        node.children = std::mem::take(&mut node.children)
            .into_iter()
            .map(|c| self.deduce_all(c))
            .collect();
        let NodeKind::SemFilter { expr, .. } = &node.kind else {
            return node;
        };
        let expr = expr.clone();
        let input = &node.children[0];
        let mut stats = Vec::new();
        for col in expr.columns() {
            match scan_stats(input, &col, self.catalog) {
                Some(s) => stats.push(s),
                // Statistics are needed for every referenced column.
                None => return node,
            }
        }
        let label = self.label("deduce");
        let (deduction, s) = deduce_predicates(self.gateway, &expr, &stats, &input.schema, &label);
        self.calls += s;
        let mut record = DeductionRecord {
            source: expr.template.clone(),
            columns: stats.iter().map(|s| s.column.clone()).collect(),
            predicates: deduction.candidates,
            dropped: deduction.dropped,
            entire_requested: deduction.entire,
            entire_applied: false,
            fallback: deduction.failure,
        };
        if !record.predicates.is_empty() {
            let texts: Vec<String> = record.predicates.iter().map(|p| p.sql_text.clone()).collect();
            let label = self.label("verify");
            let (verdicts, failure, s) = verify_necessary(self.gateway, &[&expr], &texts, &label);
            self.calls += s;
            for (p, v) in record.predicates.iter_mut().zip(verdicts) {
                p.verified = v;
            }
            if failure.is_some() {
                record.fallback = failure;
            }
        }
        let all_verified = !record.predicates.is_empty() && record.predicates.iter().all(|p| p.verified);
        record.entire_applied = record.entire_requested && all_verified && record.dropped.is_empty();
        let mut child = node.children.remove(0);
        for p in record.applied() {
            child = push_down_filter(child, p.predicate.clone(), Some(expr.template.clone()));
        }
        let out = if record.entire_applied {
            child
        } else {
            node.children.insert(0, child);
            node
        };
        self.report.deductions.push(record);
        out
    }
}

/// Statistics of the base-table column behind `col`, found by following
/// the scans under `node`. The column is renamed the way a predicate over
/// `node`'s output must spell it.
fn scan_stats(node: &PlanNode, col: &ColumnRef, catalog: &Catalog) -> Option<ColumnStats> {
    let mut found = None;
    node.walk(&mut |n| {
        if found.is_some() {
            return;
        }
        if let NodeKind::Scan { table, alias } = &n.kind {
            let alias_ok = col.table_alias.as_ref().is_none_or(|a| a.eq_ignore_ascii_case(alias));
            if !alias_ok {
                return;
            }
            if let Ok(t) = catalog.get(table) {
                if let Ok(s) = column_stats(&t, &col.column, DEFAULT_STATS_SAMPLE) {
                    found = Some(s);
                }
            }
        }
    });
    let mut s = found?;
    if node.schema.index_of(None, &col.column).is_none() {
        if let Some(a) = &col.table_alias {
            s.column = format!("{a}.{}", s.column);
        }
    }
    Some(s)
}

/// Compression of every semantic expression, then deduction, verification
/// and pushdown for every semantic filter. Each step falls back to the
/// unchanged plan on failure. Predicates deduced for a filter are pushed
/// below it; the filter itself is removed only for an entire deduction
/// whose predicates all verified.
pub fn optimize(plan: PlanNode, catalog: &Catalog, gateway: &Gateway, flags: OptimizerFlags) -> (PlanNode, OptimizerReport) {
    let mut pass = Pass {
        catalog,
        gateway,
        report: OptimizerReport::default(),
        calls: CallStats::default(),
        next_id: 0,
    };
    let mut plan = plan;
    if flags.compress {
        pass.compress_all(&mut plan);
    }
    if flags.deduce {
        plan = pass.deduce_all(plan);
    }
    pass.report.aux_calls = pass.calls.calls;
    pass.report.usage = pass.calls.usage;
    pass.report.cost = gateway.cost(pass.calls.usage);
    (plan, pass.report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::catalog::Table;
    use crate::llm::{MockConfig, MockOracle};
    use crate::sql::explain;
    use crate::value::{DataType, Value};

    fn catalog() -> Catalog {
        let cat = Catalog::new();
        let reviews: Vec<Value> = ["nan", "Good", "nan", "Negative", "Great app", "nan"]
            .into_iter()
            .map(Value::from)
            .collect();
        let ids: Vec<Value> = (0..6).map(|i| Value::Int(i % 3)).collect();
        cat.register(
            Table::from_columns(
                "user_reviews",
                vec![("app_id", DataType::Int64, ids), ("translated_review", DataType::Text, reviews)],
            )
            .unwrap(),
        );
        cat.register(
            Table::from_columns(
                "apps",
                vec![
                    ("app_id", DataType::Int64, (0..3).map(Value::Int).collect()),
                    ("name", DataType::Text, ["a", "b", "c"].into_iter().map(Value::from).collect()),
                ],
            )
            .unwrap(),
        );
        cat
    }

    fn gateway(rules: serde_json::Value) -> Gateway {
        let cfg: MockConfig = serde_json::from_value(json!({ "rules": rules })).unwrap();
        Gateway::new(Arc::new(MockOracle::new(cfg).unwrap()), "mock")
    }

    const Q: &str = "SELECT a.name FROM apps a JOIN user_reviews r ON a.app_id = r.app_id \
                     WHERE s'{translated_review} is a positive user review'";

    #[test]
    fn pushdown_below_join() {
        let cat = catalog();
        let gw = gateway(json!([
            {"task": "deduce", "verdict": ["translated_review != 'nan'", "no_such_col = 1"]},
            {"task": "verify", "verdict": [true]}
        ]));
        let plan = crate::sql::parse(Q, &cat).unwrap();
        let before = gw.snapshot();
        let (opt, report) = optimize(plan, &cat, &gw, OptimizerFlags::default());
        let text = explain(&opt);
        let filter = text.find("RelFilter").unwrap();
        assert!(text.find("HashJoin").unwrap() < filter, "{text}");
        assert!(text.find("SemFilter").unwrap() < text.find("HashJoin").unwrap(), "{text}");
        let d = &report.deductions[0];
        assert_eq!(d.dropped, ["no_such_col = 1"]);
        assert_eq!(d.applied().count(), 1);
        assert_eq!(report.aux_calls, 3);
        assert_eq!(report.compressions.len(), 1);
        assert!(report.compressions[0].accepted);
        let spent = gw.snapshot().since(&before);
        assert_eq!((spent.calls, spent.usage), (report.aux_calls, report.usage));
    }

    #[test]
    fn verification_failure_keeps_plan() {
        let cat = catalog();
        let plan = crate::sql::parse(Q, &cat).unwrap();
        for verdict in [json!([false]), json!([true, true]), json!("yes")] {
            let gw = gateway(json!([
                {"task": "deduce", "verdict": ["translated_review != 'nan'"]},
                {"task": "verify", "verdict": verdict}
            ]));
            let (opt, report) = optimize(plan.clone(), &cat, &gw, OptimizerFlags::default());
            assert_eq!(opt, plan);
            assert_eq!(report.deductions[0].applied().count(), 0);
        }
    }

    #[test]
    fn entire_deduction_removes_filter() {
        let cat = catalog();
        let gw = gateway(json!([
            {"task": "deduce", "verdict": {"predicates": ["translated_review = 'Good'"], "entire": true}},
            {"task": "verify", "verdict": [true]}
        ]));
        let plan = crate::sql::parse(Q, &cat).unwrap();
        let (opt, report) = optimize(plan, &cat, &gw, OptimizerFlags::default());
        assert!(report.deductions[0].entire_applied);
        assert_eq!(opt.semantic_operator_count(), 0);
    }

    #[test]
    fn flags_off_is_identity() {
        let cat = catalog();
        let gw = gateway(json!([]));
        let plan = crate::sql::parse(Q, &cat).unwrap();
        let (opt, report) = optimize(plan.clone(), &cat, &gw, OptimizerFlags::off());
        assert_eq!(opt, plan);
        assert!(report.is_empty());
        assert_eq!(gw.snapshot().calls, 0);
    }

    #[test]
    fn compression_rejections() {
        let cat = catalog();
        let q = "SELECT * FROM user_reviews WHERE s'the review {translated_review} that was written is positive'";
        let plan = crate::sql::parse(q, &cat).unwrap();
        let gw = gateway(json!([{"task": "compress", "verdict": "it is positive"}]));
        let (opt, report) = optimize(plan.clone(), &cat, &gw, OptimizerFlags { compress: true, deduce: false });
        assert_eq!(opt, plan);
        assert_eq!(report.compressions[0].rejected.as_deref(), Some("placeholder set changed"));

        let gw = gateway(json!([{"task": "compress", "verdict": "Answer: {translated_review} is positive"}]));
        let (opt, _) = optimize(plan, &cat, &gw, OptimizerFlags { compress: true, deduce: false });
        assert_eq!(opt.nl_exprs()[0].template, "{translated_review} is positive");
        assert_eq!(
            opt.nl_exprs()[0].placeholders[0].bound,
            ColumnRef::new(Some("user_reviews"), "translated_review")
        );
    }
}
