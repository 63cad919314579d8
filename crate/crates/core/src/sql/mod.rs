//! The SQL dialect: standard SQL plus `s'...'` natural-language expressions.

mod ast;
mod explain;
mod expr;
mod lexer;
mod nl;
mod parser;
mod plan;
mod planner;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{FromClause, JoinClause, JoinKind, OrderItem, Query, SelectItem, TableRef};
pub use explain::explain;
pub use expr::{BinaryOp, Expr, UnaryOp, AGGREGATES};
pub use lexer::{tokenize, Tok, Token};
pub use nl::{extract_placeholders, ColumnRef, NlExpr, Placeholder};
pub use parser::{parse_expr, parse_query};
pub use plan::{AggFunc, Aggregate, EvalMode, FusedNode, FusedStep, NodeKind, PlanNode, StepKind};
pub use planner::{
    bind, bind_placeholders, bind_predicate, expr_type, plan_query, push_down_filter, resolves,
    Planner,
};

use crate::catalog::Catalog;

/// Byte range in the query text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at {span}")]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

impl ParseError {
    pub fn new(message: impl Into<String>, span: Span) -> Self {
        ParseError {
            message: message.into(),
            span,
        }
    }

    /// Renders the error with the offending source line and a caret marker.
    pub fn annotate(&self, source: &str) -> String {
        let start = self.span.start.min(source.len());
        let line_start = source[..start].rfind('\n').map_or(0, |i| i + 1);
        let line_end = source[start..].find('\n').map_or(source.len(), |i| start + i);
        let line_no = source[..start].matches('\n').count() + 1;
        let width = self.span.len().clamp(1, line_end.saturating_sub(start).max(1));
        format!(
            "error: {}\n --> line {line_no}, column {}\n  | {}\n  | {}{}",
            self.message,
            start - line_start + 1,
            &source[line_start..line_end],
            " ".repeat(source[line_start..start].chars().count()),
            "^".repeat(width)
        )
    }
}

/// Parses and binds a query against the catalog, producing the initial
/// logical plan.
pub fn parse(query_text: &str, catalog: &Catalog) -> crate::Result<PlanNode> {
    if query_text.trim().is_empty() {
        return Err(ParseError::new("query is empty", Span::new(0, query_text.len())).into());
    }
    let query = parse_query(query_text)?;
    plan_query(&query, catalog)
}
