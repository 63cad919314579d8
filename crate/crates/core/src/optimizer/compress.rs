use serde::Serialize;

use crate::engine::CallStats;
use crate::llm::{strip_fences, Gateway, LlmRequest, ResponseFormat, Task, TaskKind};
use crate::sql::{ColumnRef, NlExpr};

pub const COMPRESS_SYSTEM: &str = include_str!("prompts/compress.txt");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Compression {
    pub before: String,
    pub after: String,
    pub accepted: bool,
    /// Why the rewrite was rejected, when it was.
    pub rejected: Option<String>,
}

/// The expression text from a compression reply: what follows the last
/// `Answer:` marker, or the whole reply, without quotes or backticks.
fn answer_text(reply: &str) -> String {
    let body = strip_fences(reply);
    let tail = match body.rfind("Answer:") {
        Some(i) => &body[i + "Answer:".len()..],
        None => body,
    };
    tail.trim()
        .trim_matches(|c| c == '"' || c == '`' || c == '\'')
        .trim()
        .to_string()
}

/// Parses `text` and binds its placeholders through the original's.
fn rebind(text: &str, original: &NlExpr) -> Result<NlExpr, String> {
    let mut e = NlExpr::parse(text).map_err(|e| format!("unparseable rewrite: {}", e.message))?;
    for p in &mut e.placeholders {
        let src = original
            .placeholders
            .iter()
            .find(|q| q.written.same_as(&p.written) || q.bound.same_as(&p.written))
            .ok_or_else(|| format!("unknown placeholder {{{}}}", p.written))?;
        p.bound = src.bound.clone();
    }
    e.span = original.span;
    Ok(e)
}

fn same_columns(a: &[ColumnRef], b: &[ColumnRef]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_as(y) && y.same_as(x))
}

/// Checks a proposed rewrite: it must parse, keep the distinct placeholder
/// sequence and not grow.
pub fn accept_rewrite(original: &NlExpr, text: &str) -> Result<NlExpr, String> {
    if text.is_empty() {
        return Err("empty rewrite".into());
    }
    if text.chars().count() > original.template.chars().count() {
        return Err("rewrite is longer than the original".into());
    }
    let e = rebind(text, original)?;
    if !same_columns(&e.columns(), &original.columns()) {
        return Err("placeholder set changed".into());
    }
    Ok(e)
}

/// One auxiliary call; any failed check leaves `expr` unchanged.
pub fn compress_expression(gateway: &Gateway, expr: &NlExpr, label: &str) -> (NlExpr, Compression, CallStats) {
    let mut stats = CallStats::default();
    let req = LlmRequest::new(
        gateway.aux_model(),
        COMPRESS_SYSTEM,
        format!("Expression: {}", expr.template),
        ResponseFormat::FreeText,
    )
    .with_task(Task::new(TaskKind::Compress, expr.template.clone()))
    .with_label(label);
    let outcome = match gateway.complete(&req) {
        Ok(resp) => {
            stats.record(&resp);
            let text = answer_text(&resp.text);
            accept_rewrite(expr, &text).map(|e| (e, text))
        }
        Err(e) => {
            stats.record_error(&e);
            Err(format!("model call failed: {e}"))
        }
    };
    match outcome {
        Ok((e, text)) => (
            e,
            Compression {
                before: expr.template.clone(),
                after: text,
                accepted: true,
                rejected: None,
            },
            stats,
        ),
        Err(reason) => {
            log::info!("compression of {:?} rejected: {reason}", expr.template);
            (
                expr.clone(),
                Compression {
                    before: expr.template.clone(),
                    after: expr.template.clone(),
                    accepted: false,
                    rejected: Some(reason),
                },
                stats,
            )
        }
    }
}
