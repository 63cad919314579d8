use std::collections::HashMap;

use serde::Serialize;

use super::{CatalogError, Table};
use crate::value::Value;

/// Rows sampled (as a prefix) when computing column statistics.
pub const DEFAULT_STATS_SAMPLE: usize = 10_000;
/// Number of most frequent values kept.
pub const TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnStats {
    pub column: String,
    pub nullable: bool,
    pub distinct_count: usize,
    /// Most frequent values, by descending frequency. Ties keep the order of
    /// first appearance in the sample.
    pub top_k: Vec<(Value, usize)>,
}

impl ColumnStats {
    /// Renders the statistics line the way the deduction prompt expects it,
    /// e.g. `review: nullable=true, distinct=3, top5=["nan":711, "Good":13]`.
    pub fn prompt_line(&self) -> String {
        let top: Vec<String> = self
            .top_k
            .iter()
            .map(|(v, n)| match v {
                Value::Text(s) => format!("{}:{n}", serde_json::Value::String(s.clone())),
                other => format!("{}:{n}", other.render()),
            })
            .collect();
        format!(
            "{}: nullable={}, distinct={},\ntop{}=[{}]",
            self.column,
            self.nullable,
            self.distinct_count,
            TOP_K,
            top.join(", ")
        )
    }
}

/// Computes statistics over the first `min(sample_limit, rows)` rows of
/// `column`.
pub fn column_stats(
    table: &Table,
    column: &str,
    sample_limit: usize,
) -> Result<ColumnStats, CatalogError> {
    let idx = table
        .schema
        .index_of(None, column)
        .ok_or_else(|| CatalogError::UnknownColumn {
            table: table.name.clone(),
            column: column.to_string(),
        })?;
    let values = &table.columns[idx].values;
    let sample = &values[..sample_limit.min(values.len())];

    let mut nullable = false;
    let mut counts: HashMap<crate::value::GroupKey, (usize, usize, &Value)> = HashMap::new();
    for (pos, v) in sample.iter().enumerate() {
        if v.is_null() {
            nullable = true;
            continue;
        }
        counts.entry(v.group_key()).or_insert((0, pos, v)).0 += 1;
    }
    let distinct_count = counts.len();
    let mut ranked: Vec<(usize, usize, &Value)> = counts.into_values().collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let top_k = ranked
        .into_iter()
        .take(TOP_K)
        .map(|(n, _, v)| (v.clone(), n))
        .collect();
    Ok(ColumnStats {
        column: table.schema.fields[idx].name.clone(),
        nullable,
        distinct_count,
        top_k,
    })
}
