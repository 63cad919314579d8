use serde_json::{Map, Value as Json};

use crate::catalog::Table;
use crate::value::Value;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown output format {other:?}; expected table, csv or json")),
        }
    }
}

fn json_value(v: &Value) -> Json {
    serde_json::to_value(v).unwrap_or(Json::Null)
}

fn csv_cell(v: &Value) -> String {
    if v.is_null() {
        String::new()
    } else {
        v.render()
    }
}

fn aligned(table: &Table) -> String {
    let header: Vec<String> = table.schema.fields.iter().map(|f| f.name.clone()).collect();
    let rows: Vec<Vec<String>> = table
        .rows()
        .map(|r| r.iter().map(|v| v.render().replace('\n', " ")).collect())
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out.push_str(&format!("({} row{})\n", rows.len(), if rows.len() == 1 { "" } else { "s" }));
    out
}

pub fn render_table(table: &Table, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Table => Ok(aligned(table)),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| Error::Config(e.to_string());
            w.write_record(table.schema.fields.iter().map(|f| f.name.as_str()))
                .map_err(err)?;
            for row in table.rows() {
                w.write_record(row.iter().map(csv_cell)).map_err(err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv of utf-8 cells"))
        }
        OutputFormat::Json => {
            let rows: Vec<Json> = table
                .rows()
                .map(|r| {
                    let obj: Map<String, Json> = table
                        .schema
                        .fields
                        .iter()
                        .zip(&r)
                        .map(|(f, v)| (f.name.clone(), json_value(v)))
                        .collect();
                    Json::Object(obj)
                })
                .collect();
            Ok(serde_json::to_string_pretty(&rows)? + "\n")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::DataType;

    fn t() -> Table {
        Table::from_columns(
            "r",
            vec![
                ("id", DataType::Int64, vec![Value::Int(1), Value::Int(22)]),
                ("name", DataType::Text, vec!["a, b".into(), Value::Null]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn formats() {
        assert_eq!(
            render_table(&t(), OutputFormat::Table).unwrap(),
            "id | name\n---+-----\n1  | a, b\n22 | NULL\n(2 rows)\n"
        );
        assert_eq!(render_table(&t(), OutputFormat::Csv).unwrap(), "id,name\n1,\"a, b\"\n22,\n");
        let j: Json = serde_json::from_str(&render_table(&t(), OutputFormat::Json).unwrap()).unwrap();
        assert_eq!(j, serde_json::json!([{"id": 1, "name": "a, b"}, {"id": 22, "name": null}]));
    }
}
