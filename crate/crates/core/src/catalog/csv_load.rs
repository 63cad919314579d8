use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{Catalog, CatalogError, Column, Field, Schema, Table};
use crate::value::{DataType, Value};

/// One entry of a table manifest (`--tables manifest.json`).
#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub schema: Option<BTreeMap<String, DataType>>,
}

/// Loads every table listed in a JSON manifest into `catalog`. Relative
/// paths resolve against the manifest's directory.
pub fn load_manifest(path: &Path, catalog: &Catalog) -> crate::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut names = Vec::with_capacity(entries.len());
    for entry in entries {
        let file = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        let table = load_csv(&file, &entry.name, entry.schema.as_ref())?;
        names.push(table.name.clone());
        catalog.register(table);
    }
    Ok(names)
}

/// Reads a headed CSV file into a table. Empty cells become null; the text
/// `nan` stays text. Without a schema each column gets the narrowest of
/// int64, float64 and text that fits every non-empty cell.
pub fn load_csv(
    path: &Path,
    name: &str,
    schema: Option<&BTreeMap<String, DataType>>,
) -> Result<Table, CatalogError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CatalogError::Unreadable {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(&display, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let types: Option<Vec<DataType>> = match schema {
        Some(s) => {
            let matches = s.len() == header.len()
                && header
                    .iter()
                    .all(|h| s.keys().any(|k| k.eq_ignore_ascii_case(h)));
            if !matches {
                return Err(CatalogError::SchemaMismatch {
                    path: display,
                    header,
                    schema: s.keys().cloned().collect(),
                });
            }
            Some(
                header
                    .iter()
                    .map(|h| {
                        *s.iter()
                            .find(|(k, _)| k.eq_ignore_ascii_case(h))
                            .map(|(_, t)| t)
                            .unwrap()
                    })
                    .collect(),
            )
        }
        None => None,
    };

    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); header.len()];
    let mut lines: Vec<u64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                pos,
                expected_len,
                len,
            } => CatalogError::RaggedRow {
                path: display.clone(),
                line: pos.as_ref().map_or(0, |p| p.line()),
                expected: *expected_len as usize,
                found: *len as usize,
            },
            _ => malformed(&display, e),
        })?;
        lines.push(record.position().map_or(0, |p| p.line()));
        for (col, cell) in raw.iter_mut().zip(record.iter()) {
            col.push(if cell.is_empty() {
                None
            } else {
                Some(cell.to_string())
            });
        }
    }

    let types = types.unwrap_or_else(|| raw.iter().map(|c| infer_type(c)).collect());
    let mut columns = Vec::with_capacity(header.len());
    for ((cells, &ty), col_name) in raw.into_iter().zip(&types).zip(&header) {
        let mut values = Vec::with_capacity(cells.len());
        for (cell, &line) in cells.into_iter().zip(&lines) {
            let v = match cell {
                None => Value::Null,
                Some(text) => parse_cell(&text, ty).ok_or_else(|| CatalogError::BadCell {
                    path: display.clone(),
                    line,
                    column: col_name.clone(),
                    value: text.clone(),
                    data_type: ty,
                })?,
            };
            values.push(v);
        }
        columns.push(Column::new(ty, values));
    }
    let fields = header
        .iter()
        .zip(&types)
        .map(|(h, t)| Field::new(Some(name), h, *t))
        .collect();
    Table::new(name, Schema::new(fields), columns)
}

fn malformed(path: &str, e: csv::Error) -> CatalogError {
    CatalogError::Malformed {
        path: path.to_string(),
        message: e.to_string(),
    }
}

fn is_plain_number(s: &str) -> bool {
    // Rust accepts "nan" and "inf" as floats; data files use them as text.
    let body = s.trim_start_matches(['+', '-']);
    !body.is_empty()
        && body.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '.')
        && s.parse::<f64>().is_ok_and(f64::is_finite)
}

fn infer_type(cells: &[Option<String>]) -> DataType {
    let present: Vec<&str> = cells.iter().flatten().map(String::as_str).collect();
    if present.is_empty() {
        return DataType::Text;
    }
    if present.iter().all(|s| s.parse::<i64>().is_ok()) {
        DataType::Int64
    } else if present.iter().all(|s| is_plain_number(s)) {
        DataType::Float64
    } else {
        DataType::Text
    }
}

fn parse_cell(text: &str, ty: DataType) -> Option<Value> {
    match ty {
        DataType::Text => Some(Value::Text(text.to_string())),
        DataType::Int64 => text.trim().parse().ok().map(Value::Int),
        DataType::Float64 => text.trim().parse().ok().map(Value::Float),
        DataType::Bool => match text.trim().to_ascii_lowercase().as_str() {
            "true" | "t" | "1" | "yes" => Some(Value::Bool(true)),
            "false" | "f" | "0" | "no" => Some(Value::Bool(false)),
            _ => None,
        },
    }
}
