//! CSV grids for heatmaps and JSON report files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One line per row, comma-separated, no header.
pub fn write_grid<T: Scalar, W: Write>(m: &Tensor<T>, mut w: W) -> Result<()> {
    if m.rank() != 2 {
        return Err(Error::shape("write_grid", format!("{:?} is not a matrix", m.shape())));
    }
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_grid<T: Scalar, R: BufRead>(r: R) -> Result<Tensor<T>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .trim()
            .split(',')
            .map(|s| s.parse::<T>().map_err(|_| Error::Format(format!("grid row {}: cannot parse {s:?}", n + 1))))
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty grid".into()));
    }
    Tensor::from_rows(&rows)
}

pub fn save_grid<T: Scalar>(path: &Path, m: &Tensor<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_grid<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    read_grid(BufReader::new(File::open(path)?))
}

pub fn save_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    crate::anomaly::io::write_json(path, value)
}

pub fn load_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    crate::anomaly::io::read_json(path)
}
