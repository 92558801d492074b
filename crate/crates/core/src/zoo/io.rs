use std::io::Read;
use std::path::Path;

use csv::{ReaderBuilder, Trim};
use nalgebra::{DMatrix, DVector};

use crate::error::{QscError, Result};

/// Design matrix rows `aᵢ` and offsets `bᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignData {
    pub rows: DMatrix<f64>,
    pub offsets: DVector<f64>,
}

fn read_table<R: Read>(input: R) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(Trim::All)
        .from_reader(input);
    let mut table: Vec<Vec<f64>> = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| QscError::Parse {
                line,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(QscError::Parse {
                    line,
                    message: format!("non-finite value {field:?}"),
                });
            }
            row.push(v);
        }
        if let Some(first) = table.first() {
            if first.len() != row.len() {
                return Err(QscError::Ragged {
                    line,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        table.push(row);
        lines.push(line);
    }
    if table.is_empty() {
        return Err(QscError::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok((table, lines))
}

/// Parses one sample per line: the coordinates of `aᵢ` followed by `bᵢ`.
pub fn read_design_matrix<R: Read>(input: R) -> Result<DesignData> {
    let (table, lines) = read_table(input)?;
    let width = table[0].len();
    if width < 2 {
        return Err(QscError::Parse {
            line: lines[0],
            message: "need at least one coordinate and an offset".into(),
        });
    }
    let m = table.len();
    let n = width - 1;
    let rows = DMatrix::from_fn(m, n, |i, j| table[i][j]);
    let offsets = DVector::from_fn(m, |i, _| table[i][n]);
    Ok(DesignData { rows, offsets })
}

pub fn load_design_matrix(path: impl AsRef<Path>) -> Result<DesignData> {
    read_design_matrix(std::fs::File::open(path)?)
}

/// Parses a dense `n×n` nonnegative matrix.
pub fn read_square_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let (table, lines) = read_table(input)?;
    let n = table.len();
    if table[0].len() != n {
        return Err(QscError::Ragged {
            line: lines[0],
            expected: n,
            found: table[0].len(),
        });
    }
    for (row, &line) in table.iter().zip(&lines) {
        if row.iter().any(|&v| v < 0.0) {
            return Err(QscError::Parse {
                line,
                message: "negative entry".into(),
            });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| table[i][j]))
}

pub fn load_square_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_square_matrix(std::fs::File::open(path)?)
}
