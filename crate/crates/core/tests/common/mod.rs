//! Independent dense oracles and random instance generators for the
//! integration tests.

#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::Mat;
use induced_prior::graphfilter::{balance_weights, Weights};
use induced_prior::solvers::Stencil;
use induced_prior::{Image, SamplingMask, SmoothingFilter};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric doubly stochastic `W = 0.3 I + 0.7 B²`, where `B` is the
/// balanced form of a random positive kernel. Eigenvalues lie in `[0.3, 1]`.
pub fn random_full_rank(n: usize, rng: &mut ChaCha8Rng) -> (Mat<f64>, SmoothingFilter) {
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = (-3.0 * rng.random::<f64>()).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let b = balance_weights(&Weights::Dense { n, data: k }, 1e-14, 100_000).unwrap();
    let b = to_mat(&b);
    let b2 = &b * &b;
    let w = Mat::from_fn(n, n, |i, j| {
        let sym = 0.5 * (b2[(i, j)] + b2[(j, i)]);
        0.7 * sym + if i == j { 0.3 } else { 0.0 }
    });
    let filter = from_mat(&w);
    (w, filter)
}

pub fn from_mat(w: &Mat<f64>) -> SmoothingFilter {
    let n = w.nrows();
    let data = (0..n * n).map(|k| w[(k / n, k % n)]).collect();
    SmoothingFilter::from_weights(Weights::Dense { n, data }).unwrap()
}

pub fn to_mat(w: &SmoothingFilter) -> Mat<f64> {
    let n = w.n;
    let d = w.weights.to_dense();
    Mat::from_fn(n, n, |i, j| d[i * n + j])
}

/// Orthonormal basis by twice-repeated modified Gram-Schmidt; the first
/// column is the normalised constant vector.
pub fn orthonormal_with_constant(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let mut q = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    for i in 0..n {
        q[(i, 0)] = 1.0;
    }
    for j in 0..n {
        for _ in 0..2 {
            for p in 0..j {
                let d: f64 = (0..n).map(|i| q[(i, p)] * q[(i, j)]).sum();
                for i in 0..n {
                    q[(i, j)] -= d * q[(i, p)];
                }
            }
        }
        let norm = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
        for i in 0..n {
            q[(i, j)] /= norm;
        }
    }
    q
}

/// `Q diag(s) Qᵀ` for the leading `s.len()` columns of `q`.
pub fn synthesize(q: &Mat<f64>, s: &[f64]) -> Mat<f64> {
    let n = q.nrows();
    Mat::from_fn(n, n, |i, j| (0..s.len()).map(|k| q[(i, k)] * s[k] * q[(j, k)]).sum())
}

pub fn solve(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let rhs = col(b);
    let x = a.partial_piv_lu().solve(&rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

pub fn inverse(a: &Mat<f64>) -> Mat<f64> {
    a.partial_piv_lu().solve(Mat::<f64>::identity(a.nrows(), a.nrows()))
}

pub fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn matvec(a: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum()).collect()
}

/// `C = (I − W) W⁻¹` by dense LU.
pub fn induced_dense(w: &Mat<f64>) -> Mat<f64> {
    let n = w.nrows();
    let lap = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - w[(i, j)]);
    let c = &lap * inverse(w);
    Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]))
}

pub fn mask_matrix(mask: &SamplingMask) -> Mat<f64> {
    let n = mask.len();
    Mat::from_fn(n, n, |i, j| if i == j && mask.keep()[i] { 1.0 } else { 0.0 })
}

/// Circular convolution as an explicit matrix, anchored at the stencil centre.
pub fn conv_matrix(width: usize, height: usize, stencil: &Stencil) -> Mat<f64> {
    let n = width * height;
    let (cy, cx) = (stencil.rows() / 2, stencil.cols() / 2);
    let mut a = Mat::zeros(n, n);
    for y in 0..height {
        for x in 0..width {
            for r in 0..stencil.rows() {
                for c in 0..stencil.cols() {
                    let sy = (y + height * stencil.rows() + cy - r) % height;
                    let sx = (x + width * stencil.cols() + cx - c) % width;
                    a[(y * width + x, sy * width + sx)] += stencil.taps()[r * stencil.cols() + c];
                }
            }
        }
    }
    a
}

pub fn random_image(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(width, height, |_, _| rng.random::<f64>())
}

pub fn random_mask(width: usize, height: usize, ratio: f64, rng: &mut ChaCha8Rng) -> SamplingMask {
    let mut keep: Vec<bool> = (0..width * height).map(|_| rng.random::<f64>() < ratio).collect();
    keep[0] = true;
    SamplingMask::from_keep(width, height, keep).unwrap()
}

pub fn random_stencil(rng: &mut ChaCha8Rng) -> Stencil {
    let rows = 1 + 2 * rng.random_range(0..2usize);
    let cols = 1 + 2 * rng.random_range(0..2usize);
    let taps = (0..rows * cols).map(|_| 0.1 + rng.random::<f64>()).collect();
    Stencil::new(rows, cols, taps).unwrap()
}

/// `(x, y)` grid shape with `w·h = n`.
pub fn grid(n: usize) -> (usize, usize) {
    let h = (1..=n).rev().find(|h| n.is_multiple_of(*h) && h * h <= n).unwrap();
    (n / h, h)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(f64::MIN_POSITIVE)
}
