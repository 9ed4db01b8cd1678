//! Rectangular numeric CSV: ',' delimiter, '.' decimal point, at most one
//! header row. Floats are written with 17 significant digits so a
//! write → load round trip reproduces every bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hdiv::{DenseMatrix, RealVector};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: DenseMatrix,
}

/// `{:.16e}` always carries 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn load_csv(path: &Path, has_header: bool) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, path, has_header)
}

/// Parses CSV text from any reader; `path` is used only in diagnostics.
/// Rows are reported 1-based, counting the header row.
pub fn read_csv<R: std::io::Read>(input: R, path: &Path, has_header: bool) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let fail = |row: usize, column: Option<usize>, message: String| CliError::Csv { path: path.to_path_buf(), row, column, message };

    let mut header = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (index, record) in reader.records().enumerate() {
        let row = index + 1;
        let record = record.map_err(|e| fail(row, None, e.to_string()))?;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if let Some(w) = width {
            if record.len() != w {
                return Err(fail(row, None, format!("expected {w} fields, found {}", record.len())));
            }
        }
        width = Some(record.len());
        if has_header && header.is_none() && index == 0 {
            header = Some(record.iter().map(|s| s.trim().to_string()).collect());
            continue;
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| fail(row, Some(col + 1), format!("non-numeric cell {:?}", cell)))?;
            if !v.is_finite() {
                return Err(fail(row, Some(col + 1), format!("non-finite value {cell:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 {
        return Err(fail(1, None, "no data rows".into()));
    }
    Ok(Table { header, data: DenseMatrix::from_row_slice(rows, cols, &values) })
}

/// Single-column file as a vector.
pub fn load_vector(path: &Path, has_header: bool) -> CliResult<RealVector> {
    let table = load_csv(path, has_header)?;
    if table.data.ncols() != 1 {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            row: 1,
            column: None,
            message: format!("expected one column, found {}", table.data.ncols()),
        });
    }
    Ok(table.data.column(0).into_owned())
}

pub fn write_matrix(path: &Path, header: Option<&[String]>, data: &DenseMatrix) -> CliResult<()> {
    let rows: Vec<Vec<String>> = data.row_iter().map(|r| r.iter().map(|v| format_float(*v)).collect()).collect();
    write_rows(path, header, &rows)
}

/// Writes preformatted rows; cells are quoted only when needed.
pub fn write_rows(path: &Path, header: Option<&[String]>, rows: &[Vec<String>]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    if let Some(h) = header {
        writer.write_record(h).map_err(io)?;
    }
    for row in rows {
        writer.write_record(row).map_err(io)?;
    }
    writer.into_inner().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?.flush().map_err(|e| CliError::io(path, e))
}
