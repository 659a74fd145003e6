//! Symmetric smoothing filters built from an image.
//!
//! A non-local-means kernel `K_ij = exp(-‖p_i − p_j‖² / 2h²)` over image
//! patches is balanced by a symmetric Sinkhorn-Knopp iteration into a
//! doubly stochastic `W = D K D`. Applying `W` to an image is the denoiser.

mod cache;
mod kernel;
mod sinkhorn;

use std::fmt;

use crate::error::{Error, Result};
use crate::imgcore::Image;

pub use cache::{decode_filter, encode_filter, load_filter, save_filter, FILTER_MAGIC, FILTER_VERSION};
pub use kernel::build_kernel;
pub use sinkhorn::{balance_weights, sinkhorn_balance, SinkhornOptions};

/// Pixel count up to which the automatic search window is the whole image.
pub const FULL_SEARCH_MAX_PIXELS: usize = 4096;

/// Where the guide image used to build a filter came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GuideTag {
    Oracle,
    ShepardInit,
    Iterate,
}

impl GuideTag {
    pub fn as_str(self) -> &'static str {
        match self {
            GuideTag::Oracle => "oracle",
            GuideTag::ShepardInit => "shepard-init",
            GuideTag::Iterate => "iterate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(GuideTag::Oracle),
            "shepard-init" => Some(GuideTag::ShepardInit),
            "iterate" => Some(GuideTag::Iterate),
            _ => None,
        }
    }
}

impl fmt::Display for GuideTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchWindow {
    /// Every pixel pair; dense storage.
    Full,
    /// Square window of the given radius; sparse storage.
    Radius(usize),
}

impl SearchWindow {
    /// `Full` for images up to [`FULL_SEARCH_MAX_PIXELS`], otherwise radius 5.
    pub fn auto(n: usize) -> Self {
        if n <= FULL_SEARCH_MAX_PIXELS {
            SearchWindow::Full
        } else {
            SearchWindow::Radius(5)
        }
    }
}

impl fmt::Display for SearchWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchWindow::Full => f.write_str("full"),
            SearchWindow::Radius(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    /// Patches are `(2r+1)²` windows.
    pub patch_radius: usize,
    pub search: SearchWindow,
    /// Kernel bandwidth in intensity units.
    pub h: f64,
    pub guide_tag: GuideTag,
}

impl KernelParams {
    /// Defaults for a given noise level: 5×5 patches and `h = 10σ`.
    pub fn for_noise(sigma: f64, n: usize, guide_tag: GuideTag) -> Self {
        KernelParams {
            patch_radius: 2,
            search: SearchWindow::auto(n),
            h: 10.0 * sigma,
            guide_tag,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::contract(format!("kernel bandwidth h={} must be > 0", self.h)));
        }
        Ok(())
    }
}

/// Symmetric nonnegative `n × n` weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    /// Row-major `n × n`.
    Dense { n: usize, data: Vec<f64> },
    /// Per-row adjacency lists with strictly increasing column indices (CSR).
    Sparse {
        n: usize,
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

impl Weights {
    pub fn n(&self) -> usize {
        match self {
            Weights::Dense { n, .. } | Weights::Sparse { n, .. } => *n,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Weights::Dense { .. })
    }

    pub fn nnz(&self) -> usize {
        match self {
            Weights::Dense { data, .. } => data.len(),
            Weights::Sparse { vals, .. } => vals.len(),
        }
    }

    /// `out = self · v`
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Weights::Dense { n, data } => {
                for (i, o) in out.iter_mut().enumerate().take(*n) {
                    let row = &data[i * n..(i + 1) * n];
                    *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
                }
            }
            Weights::Sparse {
                row_ptr, cols, vals, ..
            } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let r = row_ptr[i]..row_ptr[i + 1];
                    *o = cols[r.clone()].iter().zip(&vals[r]).map(|(&j, a)| a * v[j]).sum();
                }
            }
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Weights::Dense { n, data } => data[i * n + j],
            Weights::Sparse {
                row_ptr, cols, vals, ..
            } => {
                let r = row_ptr[i]..row_ptr[i + 1];
                match cols[r.clone()].binary_search(&j) {
                    Ok(k) => vals[r.start + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matvec(&vec![1.0; self.n()])
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.n();
        let mut sums = vec![0.0; n];
        self.for_each(|_, j, v| sums[j] += v);
        sums
    }

    /// Visits every stored entry as `(row, col, value)` in row-major order.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        match self {
            Weights::Dense { n, data } => {
                for i in 0..*n {
                    for j in 0..*n {
                        f(i, j, data[i * n + j]);
                    }
                }
            }
            Weights::Sparse {
                n,
                row_ptr,
                cols,
                vals,
            } => {
                for i in 0..*n {
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        f(i, cols[k], vals[k]);
                    }
                }
            }
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        match self {
            Weights::Dense { data, .. } => data.clone(),
            Weights::Sparse { .. } => {
                let mut d = vec![0.0; n * n];
                self.for_each(|i, j, v| d[i * n + j] = v);
                d
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let mut ok = true;
        self.for_each(|i, j, v| {
            if self.get(j, i) != v {
                ok = false;
            }
        });
        ok
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        match self {
            Weights::Dense { data, .. } => {
                if data.len() != n * n {
                    return Err(Error::dims(format!("{} entries", n * n), data.len()));
                }
            }
            Weights::Sparse {
                row_ptr, cols, vals, ..
            } => {
                if row_ptr.len() != n + 1 || cols.len() != vals.len() || row_ptr[n] != vals.len() {
                    return Err(Error::contract("inconsistent sparse layout"));
                }
                for i in 0..n {
                    let r = &cols[row_ptr[i]..row_ptr[i + 1]];
                    if r.windows(2).any(|p| p[0] >= p[1]) || r.iter().any(|&j| j >= n) {
                        return Err(Error::contract(format!("row {i} columns not strictly increasing within 0..{n}")));
                    }
                }
            }
        }
        let mut bad = None;
        self.for_each(|i, j, v| {
            if bad.is_none() && !(v >= 0.0 && v.is_finite()) {
                bad = Some((i, j, v));
            }
        });
        if let Some((i, j, v)) = bad {
            return Err(Error::contract(format!("entry ({i},{j}) = {v} is not a finite nonnegative weight")));
        }
        Ok(())
    }
}

/// Unbalanced NLM kernel: symmetric, unit diagonal, entries in `(0, 1]`
/// (zero outside the search window in sparse mode).
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub n: usize,
    pub weights: Weights,
    pub params: KernelParams,
}

/// Symmetric doubly stochastic filter `W`.
#[derive(Clone, Debug)]
pub struct SmoothingFilter {
    pub n: usize,
    pub weights: Weights,
    /// Largest deviation of any row or column sum from 1.
    pub balance_residual: f64,
    /// Construction parameters; `None` for filters read from a cache file or
    /// assembled from raw weights.
    pub params: Option<KernelParams>,
    pub sinkhorn_iterations: usize,
    /// Set when balancing stopped above its tolerance.
    pub warning: Option<String>,
}

impl SmoothingFilter {
    /// Wraps explicit weights, checking exact symmetry and nonnegativity and
    /// measuring the balance residual.
    pub fn from_weights(weights: Weights) -> Result<Self> {
        weights.validate()?;
        if !weights.is_symmetric() {
            return Err(Error::contract("filter weights are not symmetric"));
        }
        let balance_residual = balance_residual(&weights);
        Ok(SmoothingFilter {
            n: weights.n(),
            weights,
            balance_residual,
            params: None,
            sinkhorn_iterations: 0,
            warning: None,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_weights(Weights::Dense { n, data }).expect("identity is a valid filter")
    }

    /// Uniform averaging filter `11ᵀ/n`.
    pub fn averaging(n: usize) -> Self {
        Self::from_weights(Weights::Dense {
            n,
            data: vec![1.0 / n as f64; n * n],
        })
        .expect("averaging filter is valid")
    }

    pub fn is_dense(&self) -> bool {
        self.weights.is_dense()
    }

    /// `W v` on raw vectors.
    pub fn apply_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::dims(format!("{} pixels", self.n), format!("{} pixels", v.len())));
        }
        Ok(self.weights.matvec(v))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.weights.row_sums()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.weights.col_sums()
    }
}

/// Applies the filter as a denoiser: returns `W v`.
pub fn apply(w: &SmoothingFilter, v: &Image) -> Result<Image> {
    let out = w.apply_vec(v.data())?;
    Image::with_shape_of(v, out)
}

pub(crate) fn balance_residual(w: &Weights) -> f64 {
    let rows = w.row_sums();
    let cols = w.col_sums();
    rows.iter()
        .chain(&cols)
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}
