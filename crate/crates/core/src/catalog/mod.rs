//! Table storage: schemas, columnar tables, chunked scans, CSV ingestion and
//! the column statistics that feed predicate deduction.

mod chunk;
mod csv_load;
mod stats;

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::Serialize;
use thiserror::Error;

use crate::value::{DataType, Value};

pub use chunk::{chunk_scan, Chunk, ChunkScan, DEFAULT_CHUNK_CAPACITY};
pub use csv_load::{load_csv, load_manifest, ManifestEntry};
pub use stats::{column_stats, ColumnStats, DEFAULT_STATS_SAMPLE, TOP_K};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line} has {found} fields, header has {expected}")]
    RaggedRow {
        path: String,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: header {header:?} does not match schema {schema:?}")]
    SchemaMismatch {
        path: String,
        header: Vec<String>,
        schema: Vec<String>,
    },
    #[error("{path}: line {line}, column {column}: cannot parse {value:?} as {data_type}")]
    BadCell {
        path: String,
        line: u64,
        column: String,
        value: String,
        data_type: DataType,
    },
    #[error("malformed CSV {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {column} in table {table}")]
    UnknownColumn { table: String, column: String },
    #[error("invalid table {table}: {message}")]
    InvalidTable { table: String, message: String },
}

/// One output column of a relation. `qualifier` is the table alias the
/// column can be addressed through (`alias.column`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    pub qualifier: Option<String>,
    pub name: String,
    pub data_type: DataType,
}

impl Field {
    pub fn new(qualifier: Option<&str>, name: &str, data_type: DataType) -> Self {
        Field {
            qualifier: qualifier.map(str::to_string),
            name: name.to_string(),
            data_type,
        }
    }

    pub fn qualified_name(&self) -> String {
        match &self.qualifier {
            Some(q) => format!("{q}.{}", self.name),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolve {
    Found(usize),
    Missing,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Schema {
    pub fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Self {
        Schema { fields }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Case-insensitive column lookup. An unqualified name that matches
    /// several fields with the same name is ambiguous.
    pub fn resolve(&self, qualifier: Option<&str>, name: &str) -> Resolve {
        let mut found = None;
        for (i, f) in self.fields.iter().enumerate() {
            if !f.name.eq_ignore_ascii_case(name) {
                continue;
            }
            if let Some(q) = qualifier {
                match &f.qualifier {
                    Some(fq) if fq.eq_ignore_ascii_case(q) => {}
                    _ => continue,
                }
            }
            if found.is_some() {
                return Resolve::Ambiguous;
            }
            found = Some(i);
        }
        match found {
            Some(i) => Resolve::Found(i),
            None => Resolve::Missing,
        }
    }

    pub fn index_of(&self, qualifier: Option<&str>, name: &str) -> Option<usize> {
        match self.resolve(qualifier, name) {
            Resolve::Found(i) => Some(i),
            _ => None,
        }
    }

    /// Re-qualifies every field, as a subquery alias does.
    pub fn requalify(&self, qualifier: Option<&str>) -> Schema {
        Schema::new(
            self.fields
                .iter()
                .map(|f| Field {
                    qualifier: qualifier.map(str::to_string),
                    ..f.clone()
                })
                .collect(),
        )
    }

    pub fn join(&self, other: &Schema) -> Schema {
        let mut fields = self.fields.clone();
        fields.extend(other.fields.iter().cloned());
        Schema::new(fields)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub data_type: DataType,
    pub values: Vec<Value>,
}

impl Column {
    pub fn new(data_type: DataType, values: Vec<Value>) -> Self {
        Column { data_type, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// An immutable, column-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub schema: Schema,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(name: &str, schema: Schema, columns: Vec<Column>) -> Result<Table, CatalogError> {
        let invalid = |message: String| CatalogError::InvalidTable {
            table: name.to_string(),
            message,
        };
        if schema.len() != columns.len() {
            return Err(invalid(format!(
                "{} fields but {} columns",
                schema.len(),
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(invalid("columns have unequal lengths".into()));
            }
        }
        for (i, f) in schema.fields.iter().enumerate() {
            if schema.fields[..i]
                .iter()
                .any(|g| g.name.eq_ignore_ascii_case(&f.name) && g.qualifier == f.qualifier)
            {
                return Err(invalid(format!("duplicate column {}", f.name)));
            }
        }
        Ok(Table {
            name: name.to_string(),
            schema,
            columns,
        })
    }

    /// Builds a base table from named, typed columns.
    pub fn from_columns(
        name: &str,
        columns: Vec<(&str, DataType, Vec<Value>)>,
    ) -> Result<Table, CatalogError> {
        let schema = Schema::new(
            columns
                .iter()
                .map(|(n, t, _)| Field::new(Some(name), n, *t))
                .collect(),
        );
        let cols = columns
            .into_iter()
            .map(|(_, t, v)| Column::new(t, v))
            .collect();
        Table::new(name, schema, cols)
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(None, name).map(|i| &self.columns[i])
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.values[i].clone()).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<Value>> + '_ {
        (0..self.num_rows()).map(|i| self.row(i))
    }

    /// Concatenates chunks with a common schema into a table.
    pub fn from_chunks(name: &str, schema: Schema, chunks: &[Chunk]) -> Table {
        let mut columns: Vec<Column> = schema
            .fields
            .iter()
            .map(|f| Column::new(f.data_type, Vec::new()))
            .collect();
        for chunk in chunks {
            for (dst, src) in columns.iter_mut().zip(&chunk.columns) {
                dst.values.extend(src.values.iter().cloned());
            }
        }
        Table {
            name: name.to_string(),
            schema,
            columns,
        }
    }
}

/// Registry of loaded tables. Tables are immutable once registered;
/// registration takes the write lock.
#[derive(Debug, Default)]
pub struct Catalog {
    tables: RwLock<BTreeMap<String, Arc<Table>>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, table: Table) -> Arc<Table> {
        let table = Arc::new(table);
        self.tables
            .write()
            .insert(table.name.to_ascii_lowercase(), Arc::clone(&table));
        table
    }

    pub fn get(&self, name: &str) -> Result<Arc<Table>, CatalogError> {
        self.tables
            .read()
            .get(&name.to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().values().map(|t| t.name.clone()).collect()
    }
}
