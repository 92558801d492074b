//! CSV persistence for solver traces.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dual::InnerTrace;
use crate::error::Result;

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn save_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    write_rows(std::fs::File::create(path)?, rows)
}

pub fn load_rows<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    read_rows(std::fs::File::open(path)?)
}

/// One inner residual of the dual method, flattened for CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerRow {
    pub k: usize,
    pub t: usize,
    pub residual: f64,
    pub threshold: f64,
}

pub fn flatten_inner(inner: &[InnerTrace]) -> Vec<InnerRow> {
    inner
        .iter()
        .flat_map(|tr| {
            tr.residuals.iter().enumerate().map(move |(t, &residual)| InnerRow {
                k: tr.k,
                t,
                residual,
                threshold: tr.threshold,
            })
        })
        .collect()
}
