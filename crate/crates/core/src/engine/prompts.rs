//! Frozen operator prompts and per-tuple rendering.

use std::fmt::Write;

use crate::catalog::Schema;
use crate::llm::Fields;
use crate::sql::{ColumnRef, NlExpr, StepKind};
use crate::value::Value;

use super::eval::RowRef;

pub const FILTER_SYSTEM: &str = "You decide whether a claim about a database record is true. \
Answer with a single JSON boolean, true or false, and nothing else.";

pub const FILTER_BATCH_SYSTEM: &str = "You decide whether claims about database records are true. \
Each numbered line is one claim about one record. Answer with a JSON array of booleans, one per \
claim, in the given order, and nothing else.";

pub const PROJ_SYSTEM: &str = "You transform a database record as instructed. \
Output only the resulting value, with no explanation or formatting.";

pub const PROJ_BATCH_SYSTEM: &str = "You transform database records as instructed. \
Each numbered line is one instruction about one record. Answer with a JSON array of strings, one \
per instruction, in the given order, and nothing else.";

pub const JOIN_SYSTEM: &str = "You decide whether a claim about a pair of database records is true. \
Answer with a single JSON boolean, true or false, and nothing else.";

pub const JOIN_BATCH_SYSTEM: &str = "You decide whether claims about pairs of database records are \
true. Each numbered line is one claim about one pair. Answer with a JSON array of booleans, one per \
claim, in the given order, and nothing else.";

pub const COMPARE_SYSTEM: &str = "You order database records by a criterion. Given records A and B, \
answer true if A should come before B under the criterion and false otherwise. Answer with a single \
JSON boolean and nothing else.";

pub const AGG_SYSTEM: &str = "You aggregate a list of values as instructed. \
Output only the aggregated result, with no explanation.";

pub const FUSED_SYSTEM: &str = "You apply two steps to a database record. A claim step is answered \
with a JSON boolean; a transformation step is answered with a JSON string. Reply with a JSON object \
{\"first\": <result of step 1>, \"second\": <result of step 2>} and nothing else. If step 1 is a \
claim and it is false, set \"second\" to null.";

pub const FUSED_BATCH_SYSTEM: &str = "You apply two steps to each of several database records. A \
claim step is answered with a JSON boolean; a transformation step is answered with a JSON string. \
Reply with a JSON array holding one object {\"first\": <result of step 1>, \"second\": <result of \
step 2>} per record, in the given order, and nothing else. If step 1 is a claim and it is false for \
a record, set that record's \"second\" to null.";

/// Text the fused prompt substitutes for a reference to step 1's output.
pub const STEP1_RESULT: &str = "the result of step 1";

/// Placeholder positions of an expression resolved against a schema.
#[derive(Debug, Clone)]
pub struct Bindings {
    /// (bound column, schema index); `None` for references that are not
    /// columns of the input, such as a fused step's alias.
    cols: Vec<(ColumnRef, Option<usize>)>,
    names: Vec<String>,
}

impl Bindings {
    pub fn new(exprs: &[&NlExpr], schema: &Schema) -> Self {
        let mut cols: Vec<(ColumnRef, Option<usize>)> = Vec::new();
        for e in exprs {
            for c in e.columns() {
                if cols.iter().any(|(x, _)| x == &c) {
                    continue;
                }
                let idx = schema.index_of(c.table_alias.as_deref(), &c.column);
                cols.push((c, idx));
            }
        }
        let names = cols
            .iter()
            .map(|(c, idx)| match idx {
                Some(i) => schema.fields[*i].name.clone(),
                None => c.column.clone(),
            })
            .collect();
        Bindings { cols, names }
    }

    pub fn missing(&self) -> Vec<&ColumnRef> {
        self.cols
            .iter()
            .filter(|(_, i)| i.is_none())
            .map(|(c, _)| c)
            .collect()
    }

    fn index(&self, c: &ColumnRef) -> Option<usize> {
        self.cols.iter().find(|(x, _)| x == c).and_then(|(_, i)| *i)
    }

    /// Renders `expr` for a row; unresolved references become `fallback`.
    pub fn render(&self, expr: &NlExpr, row: &dyn RowRef, fallback: &str) -> String {
        expr.render(|c| match self.index(c) {
            Some(i) => row.get(i).render(),
            None => fallback.to_string(),
        })
    }

    /// Field map for the mock oracle, restricted to columns whose index
    /// satisfies `keep`.
    pub fn fields(&self, schema: &Schema, row: &dyn RowRef, keep: impl Fn(usize) -> bool) -> Fields {
        let mut out = Fields::new();
        for ((_, idx), name) in self.cols.iter().zip(&self.names) {
            let Some(i) = *idx else { continue };
            if !keep(i) {
                continue;
            }
            let v = row.get(i).render();
            if let Some(q) = &schema.fields[i].qualifier {
                out.insert(format!("{}.{}", q.to_lowercase(), name.to_lowercase()), v.clone());
            }
            out.entry(name.to_lowercase()).or_insert(v);
        }
        out
    }

    /// Bound column values of a row, with their names.
    pub fn values(&self, row: &dyn RowRef) -> Vec<(String, Value)> {
        self.cols
            .iter()
            .zip(&self.names)
            .filter_map(|((_, idx), name)| idx.map(|i| (name.clone(), row.get(i).clone())))
            .collect()
    }

    /// The column values shown to the comparator, `name: value` per line.
    pub fn describe(&self, row: &dyn RowRef) -> String {
        let parts: Vec<String> = self
            .cols
            .iter()
            .zip(&self.names)
            .filter_map(|((_, idx), name)| idx.map(|i| format!("{name}: {}", row.get(i).render())))
            .collect();
        parts.join("; ")
    }
}

/// The template with placeholders shown as column names.
pub fn instruction(expr: &NlExpr) -> String {
    expr.render(|c| c.column.clone())
}

pub fn filter_user(claim: &str) -> String {
    format!("Claim: {claim}")
}

pub fn proj_user(instruction: &str) -> String {
    format!("Instruction: {instruction}")
}

pub fn numbered(header: &str, lines: &[String], footer: &str) -> String {
    let mut s = format!("{header}\n");
    for (i, l) in lines.iter().enumerate() {
        let _ = writeln!(s, "{}. {}", i + 1, l.replace('\n', " "));
    }
    s.push_str(footer);
    s
}

pub fn filter_batch_user(claims: &[String]) -> String {
    numbered(
        "Claims:",
        claims,
        &format!("Return a JSON array of {} booleans.", claims.len()),
    )
}

pub fn proj_batch_user(instructions: &[String]) -> String {
    numbered(
        "Instructions:",
        instructions,
        &format!("Return a JSON array of {} strings.", instructions.len()),
    )
}

pub fn compare_user(criterion: &str, a: &str, b: &str) -> String {
    format!("Criterion: {criterion}\nA: {a}\nB: {b}\nDoes A come before B?")
}

pub fn agg_user(instruction: &str, values: &[String]) -> String {
    numbered(&format!("Instruction: {instruction}\nValues:"), values, "")
}

fn step_label(kind: StepKind) -> &'static str {
    match kind {
        StepKind::Filter => "claim",
        StepKind::Proj => "transformation",
    }
}

/// One record's part of a fused prompt.
pub fn fused_record(combined: &str, first: (StepKind, &str), second: (StepKind, &str)) -> String {
    format!(
        "Task: {combined}\nStep 1 ({}): {}\nStep 2 ({}): {}",
        step_label(first.0),
        first.1,
        step_label(second.0),
        second.1
    )
}

pub fn fused_batch_user(records: &[String]) -> String {
    let mut s = String::new();
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(s, "Record {}:\n{r}\n", i + 1);
    }
    let _ = write!(s, "Return a JSON array of {} objects.", records.len());
    s
}

/// A rendered value for the aggregation list, one entry per row.
pub fn agg_value(values: &[(String, Value)]) -> String {
    match values {
        [(_, v)] => v.render(),
        many => many
            .iter()
            .map(|(n, v)| format!("{n}: {}", v.render()))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Chunk, Column, Field};
    use crate::engine::eval::ChunkRow;
    use crate::value::DataType;
    use std::sync::Arc;

    #[test]
    fn substitution_is_total() {
        let schema = Arc::new(Schema::new(vec![Field::new(Some("r"), "review", DataType::Text)]));
        let chunk = Chunk::new(
            schema.clone(),
            vec![Column::new(DataType::Text, vec!["{odd} text".into()])],
            0,
        );
        let mut e = NlExpr::parse("{review} mentions {{braces}}").unwrap();
        e.placeholders[0].bound = ColumnRef::new(Some("r"), "review");
        let b = Bindings::new(&[&e], &schema);
        let row = ChunkRow(&chunk, 0);
        assert_eq!(b.render(&e, &row, "?"), "{odd} text mentions {braces}");
        let f = b.fields(&schema, &row, |_| true);
        assert_eq!(f["review"], "{odd} text");
        assert_eq!(f["r.review"], "{odd} text");
        assert_eq!(instruction(&e), "review mentions {braces}");
    }
}
