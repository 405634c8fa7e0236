//! CSV interchange for panels, weights and component curves.
//!
//! Files are comma-separated with a header row. Matrices are stored with one
//! matrix row per file row: panels and components are grid-major (row = grid
//! point), weights are component-major (row = component). A leading `t` or
//! `component` column is treated as a label and skipped on read. Values are
//! written with 17 significant digits so they round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const LABEL_COLUMNS: [&str; 2] = ["t", "component"];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header and values of a numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_matrix_csv(path: &Path) -> Result<Table> {
    let file = fs::File::open(path)?;
    read_matrix(file, &path.display().to_string())
}

pub fn read_matrix<R: std::io::Read>(reader: R, source: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let skip = usize::from(
        headers
            .first()
            .is_some_and(|h| LABEL_COLUMNS.contains(&h.to_ascii_lowercase().as_str())),
    );
    headers.drain(..skip);
    let cols = headers.len();
    if cols == 0 {
        return Err(Error::Parse {
            field: source.to_owned(),
            message: "no data columns".into(),
        });
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != cols + skip {
            return Err(Error::Parse {
                field: format!("{source} row {}", r + 1),
                message: format!("expected {} fields, found {}", cols + skip, record.len()),
            });
        }
        for (c, field) in record.iter().skip(skip).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                field: format!("{source} row {}, column {}", r + 1, c + 1),
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    field: format!("{source} row {}, column {}", r + 1, c + 1),
                    message: "value is not finite".into(),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            field: source.to_owned(),
            message: "no data rows".into(),
        });
    }
    Ok(Table {
        headers,
        values: DMatrix::from_row_slice(rows, cols, &data),
    })
}

/// Serializes a matrix with an optional leading label column.
pub fn matrix_to_csv(label: Option<(&str, &[String])>, headers: &[String], values: &DMatrix<f64>) -> Result<Vec<u8>> {
    if headers.len() != values.ncols() {
        return Err(Error::invalid(format!(
            "{} headers for {} columns",
            headers.len(),
            values.ncols()
        )));
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<&str> = Vec::with_capacity(headers.len() + 1);
    if let Some((name, labels)) = label {
        if labels.len() != values.nrows() {
            return Err(Error::invalid("label column length does not match row count"));
        }
        head.push(name);
    }
    head.extend(headers.iter().map(String::as_str));
    wtr.write_record(&head)?;
    for r in 0..values.nrows() {
        let mut row: Vec<String> = Vec::with_capacity(values.ncols() + 1);
        if let Some((_, labels)) = label {
            row.push(labels[r].clone());
        }
        row.extend(values.row(r).iter().map(|&v| fmt_f64(v)));
        wtr.write_record(&row)?;
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `bytes` to `path` through a temporary sibling file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Column headers `prefix_1, ..., prefix_n`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Grid labels for a `t` column.
pub fn grid_labels(grid: &[f64]) -> Vec<String> {
    grid.iter().map(|&t| fmt_f64(t)).collect()
}
