//! Headerless comma-separated matrix files: one matrix row per line, entries
//! written with 17 significant digits so a write/read cycle is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use eakf_core::{Matrix, Vector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV at row {row}: {message}")]
    Malformed {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}: row {row} has {found} entries, expected {expected}")]
    RowLength {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: row {row}, column {col}: cannot parse {value:?} as a finite number")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        value: String,
    },
    #[error("{path}: file contains no rows")]
    Empty { path: PathBuf },
}

/// Reads a dense matrix. Row and column numbers in errors are 1-based.
pub fn read_matrix(path: &Path) -> Result<Matrix, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CsvError::Malformed {
            path: path.to_owned(),
            row,
            message: e.to_string(),
        })?;
        let expected = *cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CsvError::RowLength {
                path: path.to_owned(),
                row,
                expected,
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let value = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CsvError::Parse {
                    path: path.to_owned(),
                    row,
                    col: j + 1,
                    value: field.to_owned(),
                })?;
            data.push(value);
        }
        rows += 1;
    }
    match cols {
        Some(cols) if rows > 0 && cols > 0 => Ok(Matrix::from_row_slice(rows, cols, &data)),
        _ => Err(CsvError::Empty {
            path: path.to_owned(),
        }),
    }
}

pub fn format_entry(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), CsvError> {
    let io_err = |source| CsvError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| format_entry(x)).collect();
        writeln!(out, "{}", line.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Vectors are single-column files.
pub fn write_vector(path: &Path, v: &Vector) -> Result<(), CsvError> {
    write_matrix(path, &Matrix::from_column_slice(v.len(), 1, v.as_slice()))
}
