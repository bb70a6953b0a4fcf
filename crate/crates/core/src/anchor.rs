//! Shared anchor data.
//!
//! The anchor is a dummy matrix drawn uniformly within per-column ranges and
//! shared by every party. Each party pushes its column slice of the anchor
//! through its private reducer; the analyst aligns the reduced coordinate
//! systems by making the projected anchors coincide. The anchor is generated
//! once per run from its own seed so that every participant holds the same
//! rows.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mat;
use crate::seeding;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDataset {
    pub x: DMatrix<f64>,
    pub ranges: Vec<(f64, f64)>,
    pub seed: u64,
}

/// Sidecar metadata stored next to `anchor.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorMeta {
    pub seed: u64,
    pub rows: usize,
    pub ranges: Vec<(f64, f64)>,
}

impl AnchorDataset {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }
}

/// Generate `r` anchor rows, column `j` uniform in `ranges[j]`.
pub fn generate_anchor(ranges: &[(f64, f64)], r: usize, seed: u64) -> Result<AnchorDataset> {
    if r == 0 {
        return Err(Error::Validation("anchor needs at least one row".into()));
    }
    if ranges.is_empty() {
        return Err(Error::Validation("anchor needs at least one column".into()));
    }
    for (j, &(lo, hi)) in ranges.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Validation(format!(
                "anchor range for column {j} is invalid: ({lo}, {hi})"
            )));
        }
    }
    let mut rng = seeding::rng_for(seed, "anchor");
    let mut x = DMatrix::zeros(r, ranges.len());
    for i in 0..r {
        for (j, &(lo, hi)) in ranges.iter().enumerate() {
            x[(i, j)] = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        }
    }
    Ok(AnchorDataset { x, ranges: ranges.to_vec(), seed })
}

/// Per-column min/max of a dataset's covariates, the generation ranges used
/// when the whole table is visible to the benchmark harness.
pub fn ranges_from_dataset(dataset: &Dataset) -> Vec<(f64, f64)> {
    mat::col_ranges(&dataset.x)
}

/// Columns of the anchor belonging to one column group, order preserved.
pub fn slice_anchor(anchor: &AnchorDataset, col_group: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = col_group.iter().find(|&&c| c >= anchor.cols()) {
        return Err(Error::Dimension(format!(
            "anchor column {bad} out of range (anchor has {})",
            anchor.cols()
        )));
    }
    Ok(mat::select_cols(&anchor.x, col_group))
}

/// Write `anchor.csv` and `anchor.meta.json` into `dir`.
pub fn write_anchor_files(anchor: &AnchorDataset, dir: &Path) -> Result<()> {
    let header: Vec<String> = (1..=anchor.cols()).map(|j| format!("a{j}")).collect();
    csvio::write_matrix(&dir.join("anchor.csv"), &header, &anchor.x)?;
    let meta = AnchorMeta {
        seed: anchor.seed,
        rows: anchor.rows(),
        ranges: anchor.ranges.clone(),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(dir.join("anchor.meta.json"), json)?;
    Ok(())
}

/// Read the anchor pair written by [`write_anchor_files`].
pub fn read_anchor_files(dir: &Path) -> Result<AnchorDataset> {
    let meta_path = dir.join("anchor.meta.json");
    let csv_path = dir.join("anchor.csv");
    if !meta_path.exists() || !csv_path.exists() {
        return Err(Error::Data(format!(
            "no anchor in {}; generate one first",
            dir.display()
        )));
    }
    let meta: AnchorMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
    let (_, x) = csvio::read_matrix(&csv_path)?;
    if x.nrows() != meta.rows || x.ncols() != meta.ranges.len() {
        return Err(Error::Integrity("anchor.csv does not match anchor.meta.json".into()));
    }
    Ok(AnchorDataset { x, ranges: meta.ranges, seed: meta.seed })
}
