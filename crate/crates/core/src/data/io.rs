use std::path::Path;

use super::{Row, Schema, Table, Value};
use crate::error::{Error, Result};

/// Reads a header-first CSV file whose columns are the schema features followed
/// by the target, in schema order.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header_err = |message: String| Error::Csv {
        row: 0,
        column: "<header>".into(),
        message,
    };
    let header = rdr.headers().map_err(|e| header_err(e.to_string()))?.clone();
    let expected: Vec<&str> = schema
        .features
        .iter()
        .map(|f| f.name.as_str())
        .chain(std::iter::once(schema.target.name.as_str()))
        .collect();
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(header_err(format!("expected header {expected:?}, found {found:?}")));
    }

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            row: i,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let cell = |j: usize| -> Result<&str> {
            match record.get(j) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Csv {
                    row: i,
                    column: expected[j].to_string(),
                    message: "missing cell".into(),
                }),
            }
        };
        if record.len() > expected.len() {
            return Err(Error::Csv {
                row: i,
                column: "<record>".into(),
                message: format!("expected {} cells, found {}", expected.len(), record.len()),
            });
        }
        let mut values = Vec::with_capacity(schema.features.len());
        for (j, feature) in schema.features.iter().enumerate() {
            let text = cell(j)?;
            let value = if feature.is_continuous() {
                let x: f64 = text.trim().parse().map_err(|_| Error::Csv {
                    row: i,
                    column: feature.name.clone(),
                    message: format!("cannot parse {text:?} as a number"),
                })?;
                if !x.is_finite() {
                    return Err(Error::Csv {
                        row: i,
                        column: feature.name.clone(),
                        message: format!("non-finite number {text:?}"),
                    });
                }
                Value::Num(x)
            } else {
                if feature.category_index(text).is_none() {
                    return Err(Error::Csv {
                        row: i,
                        column: feature.name.clone(),
                        message: format!("undeclared category {text:?}"),
                    });
                }
                Value::Cat(text.to_string())
            };
            values.push(value);
        }
        let label = cell(schema.features.len())?;
        if !schema.target.labels.iter().any(|l| l == label) {
            return Err(Error::Csv {
                row: i,
                column: schema.target.name.clone(),
                message: format!("undeclared label {label:?}"),
            });
        }
        rows.push(Row::new(values, label));
    }
    Ok(Table::from_trusted(schema.clone(), rows))
}

/// Writes a table in the format accepted by [`load_csv`].
pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(table, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_csv_to<W: std::io::Write>(table: &Table, out: W) -> Result<()> {
    let io_err = |e: csv::Error| Error::Encode(format!("csv write failed: {e}"));
    let mut wtr = csv::Writer::from_writer(out);
    let schema = table.schema();
    let mut header: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    header.push(&schema.target.name);
    wtr.write_record(&header).map_err(io_err)?;
    for row in table.rows() {
        let mut cells: Vec<String> = row
            .values
            .iter()
            .map(|v| match v {
                Value::Num(x) => format!("{x}"),
                Value::Cat(c) => c.clone(),
            })
            .collect();
        cells.push(row.label.clone());
        wtr.write_record(&cells).map_err(io_err)?;
    }
    wtr.flush().map_err(|e| Error::Encode(format!("csv flush failed: {e}")))?;
    Ok(())
}
