//! One-sided Jacobi singular value decomposition.
//!
//! The fusion step decomposes anchor concatenations that are often exactly
//! rank-deficient (two parties reducing the same anchor slice span a shared
//! subspace). Golub-Kahan implementations can lose accuracy there, so the
//! crate carries its own Hestenes one-sided Jacobi: plane rotations
//! orthogonalize the columns of the working matrix, which is accurate to
//! machine precision for small and moderate sizes regardless of rank.

use nalgebra::DMatrix;

/// Thin factorization `A = U * diag(sigma) * V^T` with `k = min(rows, cols)`
/// columns, singular values sorted in decreasing order, `U` and `V` column
/// orthonormal (columns for zero singular values are completed
/// orthonormally).
pub(crate) struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn jacobi_svd(a: &DMatrix<f64>) -> SvdFactors {
    if a.nrows() < a.ncols() {
        let f = jacobi_svd_tall(&a.transpose());
        return SvdFactors { u: f.v, sigma: f.sigma, v: f.u };
    }
    jacobi_svd_tall(a)
}

fn jacobi_svd_tall(a: &DMatrix<f64>) -> SvdFactors {
    let (n, m) = a.shape();
    debug_assert!(n >= m);
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(m, m);

    const MAX_SWEEPS: usize = 60;
    const TOL: f64 = 1e-15;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..m {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..m).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));

    let mut u = DMatrix::zeros(n, m);
    let mut v_sorted = DMatrix::zeros(m, m);
    let mut sigma = Vec::with_capacity(m);
    let mut filled = Vec::new();
    let mut zero_slots = Vec::new();
    for (c, &src) in order.iter().enumerate() {
        sigma.push(norms[src]);
        v_sorted.set_column(c, &v.column(src));
        if norms[src] > 0.0 {
            let col = w.column(src) / norms[src];
            u.set_column(c, &col);
            filled.push(c);
        } else {
            zero_slots.push(c);
        }
    }
    // complete U orthonormally where the singular value is exactly zero
    for slot in zero_slots {
        for e in 0..n {
            let mut cand = DMatrix::zeros(n, 1);
            cand[(e, 0)] = 1.0;
            for &j in &filled {
                let proj: f64 = (0..n).map(|i| u[(i, j)] * cand[(i, 0)]).sum();
                for i in 0..n {
                    cand[(i, 0)] -= proj * u[(i, j)];
                }
            }
            let norm = cand.column(0).norm();
            if norm > 0.5 {
                for i in 0..n {
                    u[(i, slot)] = cand[(i, 0)] / norm;
                }
                filled.push(slot);
                break;
            }
        }
    }

    SvdFactors { u, sigma, v: v_sorted }
}
