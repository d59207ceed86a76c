use nalgebra::DMatrix;

/// Smallest eigenvalue allowed, relative to the largest, for a matrix to count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Largest asymmetry `|m_ij - m_ji|`, relative to the largest entry (or 1).
pub fn symmetric_violation(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Square-root factor `F` with `F F' = m` for a symmetric PSD matrix.
///
/// Returns the lower Cholesky factor when it exists and falls back to an
/// eigenvalue square root (clipping roundoff negatives) for singular input.
/// `None` when the smallest eigenvalue is below `-PSD_TOLERANCE * max(|eig|)`.
pub fn psd_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if m.nrows() > 0 && min < -PSD_TOLERANCE * max_abs {
        return None;
    }
    if let Some(ch) = sym.clone().cholesky() {
        let l = ch.l();
        if l.iter().all(|v| v.is_finite()) {
            return Some(l);
        }
    }
    Some(clipped_sqrt(&sym))
}

/// `V diag(sqrt(max(lambda, 0)))` from the symmetric eigendecomposition.
pub fn clipped_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}

/// Whether `f` has no entries above its diagonal.
pub fn is_lower_triangular(f: &DMatrix<f64>) -> bool {
    (0..f.nrows()).all(|r| (r + 1..f.ncols()).all(|c| f[(r, c)] == 0.0))
}
