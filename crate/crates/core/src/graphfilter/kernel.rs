use rayon::prelude::*;

use super::{KernelMatrix, KernelParams, SearchWindow, Weights};
use crate::error::Result;
use crate::imgcore::Image;

/// Half-sample symmetric reflection: `-1 → 0`, `n → n-1`.
fn mirror(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Flattened `(2r+1)²` patches, one row per pixel in raster order.
fn extract_patches(guide: &Image, r: usize) -> (Vec<f64>, usize) {
    let (w, h) = guide.shape();
    let side = 2 * r + 1;
    let len = side * side;
    let mut patches = Vec::with_capacity(w * h * len);
    let r = r as isize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            for dy in -r..=r {
                let yy = mirror(y + dy, h);
                for dx in -r..=r {
                    patches.push(guide.get(mirror(x + dx, w), yy));
                }
            }
        }
    }
    (patches, len)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// NLM kernel `K_ij = exp(-‖p_i − p_j‖² / 2h²)` over mirror-padded patches.
///
/// Each unordered pair is evaluated once and mirrored, so the result is
/// exactly symmetric. Rows are evaluated in parallel on the rayon pool; the
/// assembled matrix does not depend on the schedule.
pub fn build_kernel(guide: &Image, params: &KernelParams) -> Result<KernelMatrix> {
    params.validate()?;
    let n = guide.len();
    let (patches, plen) = extract_patches(guide, params.patch_radius);
    let patch = |i: usize| &patches[i * plen..(i + 1) * plen];
    let scale = 1.0 / (2.0 * params.h * params.h);
    let kernel = |i: usize, j: usize| (-sq_dist(patch(i), patch(j)) * scale).exp();

    let weights = match params.search {
        SearchWindow::Full => {
            let upper: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| ((i + 1)..n).map(|j| kernel(i, j)).collect())
                .collect();
            let mut data = vec![0.0; n * n];
            for (i, row) in upper.iter().enumerate() {
                data[i * n + i] = 1.0;
                for (k, &v) in row.iter().enumerate() {
                    let j = i + 1 + k;
                    data[i * n + j] = v;
                    data[j * n + i] = v;
                }
            }
            Weights::Dense { n, data }
        }
        SearchWindow::Radius(s) => {
            let (w, h) = guide.shape();
            let upper: Vec<Vec<(usize, f64)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let (x, y) = (i % w, i / w);
                    let mut row = Vec::new();
                    for yy in y..=(y + s).min(h - 1) {
                        for xx in x.saturating_sub(s)..=(x + s).min(w - 1) {
                            let j = yy * w + xx;
                            if j > i {
                                row.push((j, kernel(i, j)));
                            }
                        }
                    }
                    row
                })
                .collect();
            let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
            for (i, row) in upper.into_iter().enumerate() {
                for (j, v) in row {
                    rows[i].push((j, v));
                    rows[j].push((i, v));
                }
            }
            let mut row_ptr = Vec::with_capacity(n + 1);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            row_ptr.push(0);
            for mut row in rows {
                row.sort_unstable_by_key(|&(j, _)| j);
                for (j, v) in row {
                    cols.push(j);
                    vals.push(v);
                }
                row_ptr.push(cols.len());
            }
            Weights::Sparse {
                n,
                row_ptr,
                cols,
                vals,
            }
        }
    };
    Ok(KernelMatrix {
        n,
        weights,
        params: *params,
    })
}
