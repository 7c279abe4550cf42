//! Small dense kernels on row-major `Vec<f64>` storage.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// y += alpha * x
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix. Returns
/// `None` when a pivot is not strictly positive. Leading zeros of each row
/// (the envelope) are skipped, which makes block-diagonal matrices cheap.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let first: Vec<usize> = (0..n)
        .map(|i| (0..i).find(|&k| a[i * n + k] != 0.0).unwrap_or(i))
        .collect();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in first[i]..=i {
            let mut s = a[i * n + j];
            for k in first[i].max(first[j])..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix (also lower-triangular).
pub(crate) fn invert_lower(l: &[f64], n: usize) -> Vec<f64> {
    let first: Vec<usize> = (0..n)
        .map(|i| (0..i).find(|&k| l[i * n + k] != 0.0).unwrap_or(i))
        .collect();
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        inv[c * n + c] = 1.0 / l[c * n + c];
        for r in c + 1..n {
            let mut s = 0.0;
            for k in c.max(first[r])..r {
                s -= l[r * n + k] * inv[k * n + c];
            }
            inv[r * n + c] = s / l[r * n + r];
        }
    }
    inv
}

/// `y = Aᵀ x` for row-major `A` with `x.len()` rows and `cols` columns.
pub(crate) fn mat_t_vec(a: &[f64], x: &[f64], cols: usize) -> Vec<f64> {
    let mut y = vec![0.0; cols];
    if cols == 0 {
        return y;
    }
    for (row, xi) in a.chunks_exact(cols).zip(x) {
        if *xi != 0.0 {
            axpy(*xi, row, &mut y);
        }
    }
    y
}
