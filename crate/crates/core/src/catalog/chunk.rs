use std::sync::Arc;

use super::{Column, Schema, Table};
use crate::value::Value;

/// Rows per chunk unless configured otherwise.
pub const DEFAULT_CHUNK_CAPACITY: usize = 2048;

/// A columnar batch of rows. `row_offset` is the position of the first row
/// in the stream the chunk was cut from; it orders chunks on re-assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub schema: Arc<Schema>,
    pub columns: Vec<Column>,
    pub row_offset: usize,
}

impl Chunk {
    pub fn new(schema: Arc<Schema>, columns: Vec<Column>, row_offset: usize) -> Self {
        debug_assert_eq!(schema.len(), columns.len());
        Chunk {
            schema,
            columns,
            row_offset,
        }
    }

    pub fn empty(schema: Arc<Schema>, row_offset: usize) -> Self {
        let columns = schema
            .fields
            .iter()
            .map(|f| Column::new(f.data_type, Vec::new()))
            .collect();
        Chunk::new(schema, columns, row_offset)
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, column: usize, row: usize) -> &Value {
        &self.columns[column].values[row]
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.values[row].clone()).collect()
    }

    /// Keeps the rows at `indices`, in the given order.
    pub fn take(&self, indices: &[usize]) -> Chunk {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                Column::new(
                    c.data_type,
                    indices.iter().map(|&i| c.values[i].clone()).collect(),
                )
            })
            .collect();
        Chunk::new(Arc::clone(&self.schema), columns, self.row_offset)
    }

    /// Keeps the rows whose mask entry is true.
    pub fn filter(&self, mask: &[bool]) -> Chunk {
        let idx: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &keep)| keep.then_some(i))
            .collect();
        self.take(&idx)
    }

    pub fn with_column(&self, schema: Arc<Schema>, column: Column) -> Chunk {
        let mut columns = self.columns.clone();
        columns.push(column);
        Chunk::new(schema, columns, self.row_offset)
    }

    /// Concatenates chunks sharing one schema. The result keeps the first
    /// chunk's offset.
    pub fn concat(schema: Arc<Schema>, chunks: &[Chunk]) -> Chunk {
        let offset = chunks.first().map_or(0, |c| c.row_offset);
        let mut out = Chunk::empty(schema, offset);
        for c in chunks {
            for (dst, src) in out.columns.iter_mut().zip(&c.columns) {
                dst.values.extend(src.values.iter().cloned());
            }
        }
        out
    }

    /// Splits into chunks of at most `capacity` rows, numbering offsets from
    /// `base_offset`.
    pub fn split(&self, capacity: usize, base_offset: usize) -> Vec<Chunk> {
        let capacity = capacity.max(1);
        let n = self.len();
        (0..n)
            .step_by(capacity)
            .map(|start| {
                let end = (start + capacity).min(n);
                let mut c = self.take(&(start..end).collect::<Vec<_>>());
                c.row_offset = base_offset + start;
                c
            })
            .collect()
    }
}

/// Iterator returned by [`chunk_scan`].
pub struct ChunkScan {
    table: Arc<Table>,
    schema: Arc<Schema>,
    capacity: usize,
    next: usize,
}

impl Iterator for ChunkScan {
    type Item = Chunk;

    fn next(&mut self) -> Option<Chunk> {
        let total = self.table.num_rows();
        if self.next >= total {
            return None;
        }
        let start = self.next;
        let end = (start + self.capacity).min(total);
        self.next = end;
        let columns = self
            .table
            .columns
            .iter()
            .map(|c| Column::new(c.data_type, c.values[start..end].to_vec()))
            .collect();
        Some(Chunk::new(Arc::clone(&self.schema), columns, start))
    }
}

/// Streams `table` in row order as chunks of at most `chunk_capacity` rows.
///
/// # Panics
/// Panics if `chunk_capacity` is zero.
pub fn chunk_scan(table: Arc<Table>, chunk_capacity: usize) -> ChunkScan {
    assert!(chunk_capacity > 0, "chunk capacity must be positive");
    let schema = Arc::new(table.schema.clone());
    ChunkScan {
        table,
        schema,
        capacity: chunk_capacity,
        next: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::DataType;
    use proptest::prelude::*;

    fn ints(n: usize) -> Arc<Table> {
        Arc::new(
            Table::from_columns(
                "t",
                vec![("x", DataType::Int64, (0..n as i64).map(Value::Int).collect())],
            )
            .unwrap(),
        )
    }

    #[test]
    fn five_rows_capacity_two() {
        let chunks: Vec<_> = chunk_scan(ints(5), 2).collect();
        assert_eq!(chunks.iter().map(Chunk::len).collect::<Vec<_>>(), [2, 2, 1]);
        assert_eq!(
            chunks.iter().map(|c| c.row_offset).collect::<Vec<_>>(),
            [0, 2, 4]
        );
    }

    #[test]
    fn case_study_granularity() {
        let chunks: Vec<_> = chunk_scan(ints(864), 27).collect();
        assert_eq!(chunks.len(), 32);
        assert!(chunks.iter().all(|c| c.len() == 27));
    }

    #[test]
    fn empty_table_yields_nothing() {
        assert_eq!(chunk_scan(ints(0), 4).count(), 0);
    }

    proptest! {
        #[test]
        fn chunks_partition_the_table(n in 0usize..300, cap in 1usize..64) {
            let t = ints(n);
            let chunks: Vec<_> = chunk_scan(Arc::clone(&t), cap).collect();
            let mut expect = 0;
            for c in &chunks {
                prop_assert!(c.len() > 0 && c.len() <= cap);
                prop_assert_eq!(c.row_offset, expect);
                expect += c.len();
            }
            let rebuilt = Table::from_chunks("t", t.schema.clone(), &chunks);
            prop_assert_eq!(&rebuilt, t.as_ref());
        }
    }
}
