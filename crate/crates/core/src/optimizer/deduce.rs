use serde::Serialize;
use serde_json::Value as Json;

use crate::catalog::{ColumnStats, Schema};
use crate::engine::prompts::instruction;
use crate::engine::CallStats;
use crate::llm::{strip_fences, Gateway, Item, LlmRequest, Parsed, ResponseFormat, Scalar, Task, TaskKind};
use crate::sql::{bind_predicate, Expr, NlExpr};

pub const DEDUCE_SYSTEM: &str = include_str!("prompts/deduce.txt");
pub const DEDUCE_ENTIRE_NOTE: &str = include_str!("prompts/deduce_entire.txt");
pub const VERIFY_SYSTEM: &str = include_str!("prompts/verify.txt");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeducedPredicate {
    pub sql_text: String,
    pub verified: bool,
    /// Template of the originating filter.
    pub source_expr: String,
    /// The predicate bound against the filter's input.
    #[serde(skip)]
    pub predicate: Expr,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Deduction {
    pub candidates: Vec<DeducedPredicate>,
    /// Entries of the reply that did not bind as predicates.
    pub dropped: Vec<String>,
    /// The reply claimed the predicates are also sufficient.
    pub entire: bool,
    /// Why the reply was unusable, when it was.
    pub failure: Option<String>,
}

/// First JSON value embedded in `text`, tolerating prose around it.
fn embedded_json(text: &str) -> Option<Json> {
    let body = strip_fences(text);
    if let Ok(v) = serde_json::from_str(body) {
        return Some(v);
    }
    let start = body.find(['[', '{'])?;
    let close = if body[start..].starts_with('[') { ']' } else { '}' };
    let end = body.rfind(close)?;
    serde_json::from_str(&body[start..=end]).ok()
}

/// Accepts `["p", ..]` or `{"predicates": ["p", ..], "entire": bool}`.
pub fn parse_deduction(text: &str) -> Option<(Vec<String>, bool)> {
    let strings = |v: &Json| -> Option<Vec<String>> {
        v.as_array()?
            .iter()
            .map(|s| s.as_str().map(str::to_string))
            .collect()
    };
    match embedded_json(text)? {
        v @ Json::Array(_) => Some((strings(&v)?, false)),
        Json::Object(o) => Some((
            strings(o.get("predicates")?)?,
            o.get("entire").and_then(Json::as_bool).unwrap_or(false),
        )),
        _ => None,
    }
}

pub fn deduce_user(expr: &NlExpr, stats: &[ColumnStats]) -> String {
    let lines: Vec<String> = stats.iter().map(ColumnStats::prompt_line).collect();
    format!(
        "NLE Predicate:\n{}\nColumn stats:\n{}\nOutput:",
        instruction(expr),
        lines.join("\n")
    )
}

/// One auxiliary call proposing necessary predicates for `expr`, each bound
/// against `schema`. Unbindable entries are dropped.
pub fn deduce_predicates(
    gateway: &Gateway,
    expr: &NlExpr,
    stats: &[ColumnStats],
    schema: &Schema,
    label: &str,
) -> (Deduction, CallStats) {
    let mut calls = CallStats::default();
    let mut out = Deduction::default();
    let system = format!("{DEDUCE_SYSTEM}{DEDUCE_ENTIRE_NOTE}");
    let req = LlmRequest::new(gateway.aux_model(), system, deduce_user(expr, stats), ResponseFormat::FreeText)
        .with_task(Task::new(TaskKind::Deduce, expr.template.clone()))
        .with_label(label);
    let text = match gateway.complete(&req) {
        Ok(resp) => {
            calls.record(&resp);
            resp.text
        }
        Err(e) => {
            calls.record_error(&e);
            out.failure = Some(format!("model call failed: {e}"));
            return (out, calls);
        }
    };
    let Some((preds, entire)) = parse_deduction(&text) else {
        out.failure = Some("reply is not a JSON array of predicates".into());
        return (out, calls);
    };
    out.entire = entire;
    for p in preds {
        match bind_predicate(&p, schema) {
            Ok(predicate) => out.candidates.push(DeducedPredicate {
                sql_text: p,
                verified: false,
                source_expr: expr.template.clone(),
                predicate,
            }),
            Err(e) => {
                log::info!("dropping deduced predicate {p:?}: {}", e.message);
                out.dropped.push(p);
            }
        }
    }
    (out, calls)
}

pub fn verify_user(exprs: &[&NlExpr], candidates: &[String]) -> String {
    let nle: Vec<&str> = exprs.iter().map(|e| e.template.as_str()).collect();
    format!(
        "NL Expressions: {}\nSQL Predicates: {}\nOutput:",
        serde_json::to_string(&nle).expect("strings serialize"),
        serde_json::to_string(candidates).expect("strings serialize")
    )
}

/// One auxiliary call judging each candidate a necessary condition or not.
/// A malformed reply rejects every candidate; the reason comes back too.
pub fn verify_necessary(
    gateway: &Gateway,
    exprs: &[&NlExpr],
    candidates: &[String],
    label: &str,
) -> (Vec<bool>, Option<String>, CallStats) {
    let mut calls = CallStats::default();
    if candidates.is_empty() {
        return (Vec::new(), None, calls);
    }
    let template = exprs.iter().map(|e| e.template.as_str()).collect::<Vec<_>>().join("\n");
    let format = ResponseFormat::JsonArray {
        len: candidates.len(),
        item: Item::Scalar(Scalar::Bool),
    };
    let req = LlmRequest::new(gateway.aux_model(), VERIFY_SYSTEM, verify_user(exprs, candidates), format)
        .with_task(Task::new(TaskKind::Verify, template).with_extra(candidates.to_vec()))
        .with_label(label);
    let rejected = |why: String| (vec![false; candidates.len()], Some(why));
    let (verdicts, failure) = match gateway.complete(&req) {
        Ok(resp) => {
            calls.record(&resp);
            let flags: Option<Vec<bool>> = resp
                .parsed
                .and_then(Parsed::into_list)
                .and_then(|l| l.iter().map(Parsed::as_bool).collect());
            match flags {
                Some(f) if f.len() == candidates.len() => (f, None),
                _ => rejected("verification reply has the wrong shape".into()),
            }
        }
        Err(e) => {
            calls.record_error(&e);
            rejected(format!("verification failed: {e}"))
        }
    };
    (verdicts, failure, calls)
}
