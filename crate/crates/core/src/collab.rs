//! Analyst-side fusion of intermediate representations.
//!
//! The reduced anchor matrices of all institutions are concatenated and
//! decomposed with a truncated SVD (square diagonal factor of size `rank`).
//! Each institution's mapping matrix solves, in the least-squares sense, for
//! the transform that sends its reduced anchor onto the shared left factor;
//! applying the same transforms to the reduced data blocks and stacking the
//! results yields one fused feature matrix whose rows align across
//! institutions well enough for a single propensity model.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mat;
use crate::svd;

/// Rank-`rank` factors: `U` (rows x rank), singular values (rank), `V`
/// (cols x rank). `U * diag(S) * V^T` is the best Frobenius-norm
/// approximation of the input at that rank.
pub fn truncated_svd(m: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let max_rank = m.nrows().min(m.ncols());
    if rank == 0 || rank > max_rank {
        return Err(Error::Dimension(format!(
            "rank {rank} out of range for a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let f = svd::jacobi_svd(m);
    let mut u = DMatrix::zeros(m.nrows(), rank);
    let mut v = DMatrix::zeros(m.ncols(), rank);
    let mut s = DVector::zeros(rank);
    for c in 0..rank {
        s[c] = f.sigma[c];
        u.set_column(c, &f.u.column(c));
        v.set_column(c, &f.v.column(c));
    }
    Ok((u, s, v))
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// `tol * sigma_max` are treated as zero; the default tolerance is
/// `1e-12 * max(rows, cols)`.
pub fn pseudoinverse(m: &DMatrix<f64>, tol: Option<f64>) -> DMatrix<f64> {
    let f = svd::jacobi_svd(m);
    let sigma_max = f.sigma.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or(1e-12 * m.nrows().max(m.ncols()) as f64);
    let cutoff = tol * sigma_max;
    let mut inv = DMatrix::zeros(f.sigma.len(), f.sigma.len());
    for (i, &s) in f.sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            inv[(i, i)] = 1.0 / s;
        }
    }
    &f.v * inv * f.u.transpose()
}

/// One institution's mapping from its concatenated reduced coordinates to
/// the shared fused space.
#[derive(Debug, Clone)]
pub struct CollabTransform {
    pub k: usize,
    /// `m_k x target_dim` where `m_k` is the institution's total reduced width.
    pub g: DMatrix<f64>,
    pub target_dim: usize,
}

/// The fused analyst-side feature matrix with sample ids and the owning
/// institution of each row.
#[derive(Debug, Clone)]
pub struct CollabRepresentation {
    pub ids: Vec<u64>,
    pub x_check: DMatrix<f64>,
    pub institution_of: Vec<usize>,
}

/// Build one mapping matrix per institution from the reduced anchors.
///
/// `anchor_reps[k]` is institution `k`'s reduced anchor (`r x m_k`). All
/// institutions must share the anchor row count `r`.
pub fn build_collab_transforms(
    anchor_reps: &[DMatrix<f64>],
    target_dim: usize,
) -> Result<Vec<CollabTransform>> {
    if anchor_reps.is_empty() {
        return Err(Error::Validation("no anchor representations".into()));
    }
    let r = anchor_reps[0].nrows();
    if anchor_reps.iter().any(|a| a.nrows() != r) {
        return Err(Error::Dimension("anchor representations must share row count".into()));
    }
    let total: usize = anchor_reps.iter().map(|a| a.ncols()).sum();
    if target_dim == 0 || target_dim > total || target_dim > r {
        return Err(Error::Validation(format!(
            "fused dimension {target_dim} out of range (row count {r}, total width {total})"
        )));
    }

    let concat = mat::hcat(anchor_reps);
    let (u1, s, _) = truncated_svd(&concat, target_dim)?;
    let sigma_max = s[0];
    if sigma_max > 0.0 && s[target_dim - 1] <= 1e-12 * concat.nrows().max(concat.ncols()) as f64 * sigma_max
    {
        log::warn!(
            "fused dimension {target_dim} exceeds the effective rank of the anchor concatenation"
        );
    }

    Ok(anchor_reps
        .iter()
        .enumerate()
        .map(|(k, rep)| CollabTransform {
            k,
            g: pseudoinverse(rep, None) * &u1,
            target_dim,
        })
        .collect())
}

/// Map each institution's reduced data through its transform and stack the
/// results in institution order.
pub fn build_collab_representation(
    data_reps: &[(Vec<u64>, DMatrix<f64>)],
    transforms: &[CollabTransform],
) -> Result<CollabRepresentation> {
    if data_reps.len() != transforms.len() {
        return Err(Error::Validation(format!(
            "{} data representations for {} transforms",
            data_reps.len(),
            transforms.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut parts = Vec::with_capacity(data_reps.len());
    let mut ids = Vec::new();
    let mut institution_of = Vec::new();
    for ((block_ids, rep), transform) in data_reps.iter().zip(transforms) {
        if rep.nrows() != block_ids.len() {
            return Err(Error::Dimension("ids and rows must align".into()));
        }
        if rep.ncols() != transform.g.nrows() {
            return Err(Error::Dimension(format!(
                "institution {} supplies {} columns, transform expects {}",
                transform.k,
                rep.ncols(),
                transform.g.nrows()
            )));
        }
        for &id in block_ids {
            if !seen.insert(id) {
                return Err(Error::Validation(format!(
                    "sample id {id} appears in more than one institution"
                )));
            }
        }
        parts.push(rep * &transform.g);
        ids.extend_from_slice(block_ids);
        institution_of.extend(std::iter::repeat_n(transform.k, block_ids.len()));
    }
    Ok(CollabRepresentation { ids, x_check: mat::vcat(&parts), institution_of })
}

/// Worst pairwise disagreement of the projected anchors, relative to the
/// Frobenius norm of the first projection. Zero means the institutions'
/// fused coordinates coincide exactly on the anchor.
pub fn anchor_alignment_error(
    anchor_reps: &[DMatrix<f64>],
    transforms: &[CollabTransform],
) -> f64 {
    let projected: Vec<DMatrix<f64>> = anchor_reps
        .iter()
        .zip(transforms)
        .map(|(rep, t)| rep * &t.g)
        .collect();
    let scale = projected[0].norm().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..projected.len() {
        for j in i + 1..projected.len() {
            worst = worst.max((&projected[i] - &projected[j]).norm() / scale);
        }
    }
    worst
}
