//! Small dense vector helpers shared by the solvers.

use faer::{Col, Mat, MatRef};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn col_from(v: &[f64]) -> Col<f64> {
    Col::from_fn(v.len(), |i| v[i])
}

pub(crate) fn col_to_vec(c: &Col<f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

/// `Mᵀ v` for a column-major matrix.
pub(crate) fn mat_t_vec(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let c = col_from(v);
    col_to_vec(&(m.transpose() * &c))
}

/// `M v`
pub(crate) fn mat_vec(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let c = col_from(v);
    col_to_vec(&(m * &c))
}

pub(crate) fn mat_from_row_major(n: usize, data: &[f64]) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| data[i * n + j])
}
