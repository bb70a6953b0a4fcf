//! Per-party dimensionality reduction.
//!
//! Each party fits a PCA on its own covariate block and applies it to both
//! the block and its slice of the shared anchor. The fitted [`Reducer`] is
//! the party's private transformation: it deliberately implements no
//! serialization, so it cannot end up in an exchange directory by accident.
//! Only the reduced matrices leave the party.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::svd;

/// A fitted centering/scaling + orthonormal projection. Private to the party
/// that fit it.
#[derive(Debug, Clone)]
pub struct Reducer {
    pub col_means: DVector<f64>,
    pub col_scales: DVector<f64>,
    /// `m_l x target_dim`, orthonormal columns, sorted by decreasing
    /// singular value, sign-canonicalized.
    pub components: DMatrix<f64>,
    pub target_dim: usize,
    /// All singular values of the centered (scaled) fitting block.
    pub singular_values: Vec<f64>,
}

/// What a reduced matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepKind {
    Data,
    Anchor,
}

/// A party's reduced output: its data block or its anchor slice.
#[derive(Debug, Clone)]
pub struct IntermediateRep {
    pub k: usize,
    pub l: usize,
    pub kind: RepKind,
    /// Sample ids, present for `RepKind::Data` only.
    pub ids: Option<Vec<u64>>,
    pub matrix: DMatrix<f64>,
}

/// Fit a PCA reducer on one covariate block.
///
/// Components are the top right singular vectors of the centered (and, when
/// `standardize` is set, variance-scaled) block. A zero-variance column under
/// standardization keeps scale 1 with a warning.
pub fn fit_reducer(block: &DMatrix<f64>, target_dim: usize, standardize: bool) -> Result<Reducer> {
    let (n, m) = block.shape();
    if n < 2 {
        return Err(Error::Data(format!("PCA needs at least 2 rows, got {n}")));
    }
    if target_dim == 0 || target_dim > m {
        return Err(Error::Dimension(format!(
            "target dimension {target_dim} out of range for {m} columns"
        )));
    }

    let mut means = DVector::zeros(m);
    for j in 0..m {
        means[j] = block.column(j).sum() / n as f64;
    }
    let mut scales = DVector::from_element(m, 1.0);
    if standardize {
        for j in 0..m {
            let var = block
                .column(j)
                .iter()
                .map(|&v| (v - means[j]).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            if var > 0.0 {
                scales[j] = var.sqrt();
            } else {
                log::warn!("column {j} has zero variance; scale forced to 1");
            }
        }
    }

    let mut centered = block.clone();
    for j in 0..m {
        let mean = means[j];
        let scale = scales[j];
        for i in 0..n {
            centered[(i, j)] = (centered[(i, j)] - mean) / scale;
        }
    }

    let f = svd::jacobi_svd(&centered);
    let singular_values = f.sigma.clone();
    let mut components = DMatrix::zeros(m, target_dim);
    for c in 0..target_dim {
        components.set_column(c, &f.v.column(c));
    }
    canonicalize_signs(&mut components);

    Ok(Reducer { col_means: means, col_scales: scales, components, target_dim, singular_values })
}

/// Make the largest-magnitude entry of each column positive.
fn canonicalize_signs(components: &mut DMatrix<f64>) {
    for mut col in components.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

impl Reducer {
    /// Project rows: `((rows - means) / scales) * components`.
    pub fn apply(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.col_means.len() {
            return Err(Error::Dimension(format!(
                "reducer fit on {} columns, applied to {}",
                self.col_means.len(),
                rows.ncols()
            )));
        }
        let mut centered = rows.clone();
        for j in 0..rows.ncols() {
            let mean = self.col_means[j];
            let scale = self.col_scales[j];
            for i in 0..rows.nrows() {
                centered[(i, j)] = (centered[(i, j)] - mean) / scale;
            }
        }
        Ok(centered * &self.components)
    }

    /// Share of fitting-block variance captured by the first `k` components.
    pub fn explained_variance_fraction(&self, k: usize) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.singular_values.iter().take(k).map(|s| s * s).sum::<f64>() / total
    }
}
