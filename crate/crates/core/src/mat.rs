//! Small dense-matrix helpers shared across modules.

use nalgebra::DMatrix;

/// Horizontal concatenation. Panics on row-count mismatch (caller validates).
pub(crate) fn hcat(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    assert!(!parts.is_empty());
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hcat: row mismatch");
        out.view_mut((0, offset), (rows, p.ncols())).copy_from(p);
        offset += p.ncols();
    }
    out
}

/// Vertical concatenation. Panics on column-count mismatch (caller validates).
pub(crate) fn vcat(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    assert!(!parts.is_empty());
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vcat: column mismatch");
        out.view_mut((offset, 0), (p.nrows(), cols)).copy_from(p);
        offset += p.nrows();
    }
    out
}

/// Rows of `m` given by `idx`, in order.
pub(crate) fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Columns of `m` given by `idx`, in order.
pub(crate) fn select_cols(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Per-column (min, max) pairs.
pub(crate) fn col_ranges(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    (0..m.ncols())
        .map(|j| {
            let col = m.column(j);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in col.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        })
        .collect()
}
