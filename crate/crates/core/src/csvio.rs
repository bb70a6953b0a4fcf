//! CSV readers/writers for the numeric matrices the toolkit exchanges.
//!
//! Floats are written with [`crate::numfmt::fmt_f64`] so files round-trip to
//! identical bit patterns.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numfmt::{fmt_f64, parse_f64};

pub fn write_matrix(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{} header fields for {} columns",
            header.len(),
            m.ncols()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record?;
        let row: Option<Vec<f64>> = record.iter().map(parse_f64).collect();
        let row = row.ok_or_else(|| {
            Error::Data(format!("{}: non-numeric cell in row {}", path.display(), rows.len() + 1))
        })?;
        if row.len() != header.len() {
            return Err(Error::Data(format!("{}: ragged row", path.display())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: empty matrix", path.display())));
    }
    let m = DMatrix::from_fn(rows.len(), header.len(), |i, j| rows[i][j]);
    Ok((header, m))
}

/// Matrix with a leading integer `id` column.
pub fn write_ids_matrix(
    path: &Path,
    ids: &[u64],
    header: &[String],
    m: &DMatrix<f64>,
) -> Result<()> {
    if ids.len() != m.nrows() {
        return Err(Error::Dimension("ids and rows must align".into()));
    }
    if header.len() != m.ncols() {
        return Err(Error::Dimension("header and columns must align".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut full = vec!["id".to_string()];
    full.extend_from_slice(header);
    w.write_record(&full)?;
    for i in 0..m.nrows() {
        let mut row = vec![ids[i].to_string()];
        row.extend((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ids_matrix(path: &Path) -> Result<(Vec<u64>, Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(Error::Data(format!("{}: first column must be 'id'", path.display())));
    }
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record?;
        let id: u64 = record
            .get(0)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Data(format!("{}: bad id", path.display())))?;
        let row: Option<Vec<f64>> = record.iter().skip(1).map(parse_f64).collect();
        let row = row.ok_or_else(|| {
            Error::Data(format!("{}: non-numeric cell in row {}", path.display(), rows.len() + 1))
        })?;
        ids.push(id);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: empty matrix", path.display())));
    }
    let m = DMatrix::from_fn(rows.len(), header.len() - 1, |i, j| rows[i][j]);
    Ok((ids, header[1..].to_vec(), m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0 / 3.0, 1e-300, 5.5, -0.0, 42.0]);
        let header: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        write_matrix(&path, &header, &m).unwrap();
        let (h, back) = read_matrix(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(m.as_slice().len(), back.as_slice().len());
        for (x, y) in m.iter().zip(back.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn ids_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        write_ids_matrix(&path, &[10, 20], &["u".into(), "v".into()], &m).unwrap();
        let (ids, header, back) = read_ids_matrix(&path).unwrap();
        assert_eq!(ids, vec![10, 20]);
        assert_eq!(header, vec!["u", "v"]);
        assert_eq!(back, m);
    }
}
