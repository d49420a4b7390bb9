//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    // σ₁(M)² is the top eigenvalue of the smaller Gram matrix.
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
pub fn sorted_eigen(sym: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(order.iter());
    (values, vectors)
}

/// Rank-`k` positive semidefinite square root: `Z = U_k Λ_k^{1/2}` from the
/// top `k` eigenpairs. Eigenvalues at or below `floor`, or negligible next
/// to the largest, count as zero. Returns `Z` and the number of eigenvalues
/// that were kept.
pub fn psd_factor(sym: &DMatrix<f64>, k: usize, floor: f64) -> (DMatrix<f64>, usize) {
    let n = sym.nrows();
    let (values, vectors) = sorted_eigen(sym);
    let scale = values.first().map(|v| v.abs()).unwrap_or(0.0);
    let tol = (scale * 1e-12 * n as f64).max(floor);
    let mut z = DMatrix::zeros(n, k);
    let mut kept = 0;
    for c in 0..k.min(n) {
        let lambda = values[c];
        if lambda > tol {
            z.set_column(c, &(vectors.column(c) * lambda.sqrt()));
            kept += 1;
        }
    }
    (z, kept)
}
