//! Numeric CSV reading and writing: comma-separated, one header row,
//! decimal point, UTF-8. Values are written with the shortest decimal
//! form that parses back to the identical float.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// A parsed numeric table. A completely empty file parses to an empty
/// header and no rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn width(&self) -> usize {
        self.header.len()
    }
}

pub fn parse_table(text: &str, origin: &str) -> Result<CsvTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header_line)) = lines.next() else {
        return Ok(CsvTable {
            header: Vec::new(),
            rows: Vec::new(),
        });
    };
    let header: Vec<String> = header_line
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let width = header.len();
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse(format!(
                "{origin}:{}: expected {width} fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        for (col, field) in fields.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{origin}:{}: column {} ('{}') is not numeric",
                    lineno + 1,
                    col + 1,
                    field.trim()
                ))
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

pub fn read_table(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    parse_table(&text, &path.display().to_string())
}

pub fn format_table(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    fs::write(path, format_table(header, rows))?;
    Ok(())
}

/// A dataset split out of a table: the rightmost `targets` columns are the
/// outputs, everything before them the inputs.
pub struct LoadedDataset {
    pub data: Dataset,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

pub fn dataset_from_table(table: &CsvTable, targets: usize, origin: &str) -> Result<LoadedDataset> {
    if targets == 0 {
        return Err(Error::InvalidArgument(
            "need at least one target column".into(),
        ));
    }
    if table.width() <= targets {
        return Err(Error::InvalidArgument(format!(
            "{origin}: {} columns cannot hold {} target(s) plus at least one feature",
            table.width(),
            targets
        )));
    }
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument(format!("{origin}: no data rows")));
    }
    let p = table.width() - targets;
    let inputs: Vec<Vec<f64>> = table.rows.iter().map(|r| r[..p].to_vec()).collect();
    let outputs: Vec<Vec<f64>> = table.rows.iter().map(|r| r[p..].to_vec()).collect();
    Ok(LoadedDataset {
        data: Dataset::from_rows(&inputs, &outputs)?,
        feature_names: table.header[..p].to_vec(),
        target_names: table.header[p..].to_vec(),
    })
}

pub fn read_dataset(path: &Path, targets: usize) -> Result<LoadedDataset> {
    let table = read_table(path)?;
    dataset_from_table(&table, targets, &path.display().to_string())
}

/// Writes a dataset back out with its column names.
pub fn write_dataset(
    path: &Path,
    data: &Dataset,
    features: &[String],
    targets: &[String],
) -> Result<()> {
    let mut header: Vec<String> = features.to_vec();
    header.extend(targets.iter().cloned());
    let mut rows = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let mut row: Vec<f64> = data.inputs().row(i).iter().copied().collect();
        row.extend(data.outputs().row(i).iter().copied());
        rows.push(row);
    }
    write_table(path, &header, &rows)
}
