//! Truncated eigendecomposition of a smoothing filter and the two quadratic
//! priors built from it.
//!
//! With `W = UΣUᵀ` restricted to the `m` retained eigenpairs:
//!
//! - conventional graph Laplacian `L = I − W`: `vᵀLv = ‖v‖² − Σ sᵢ (uᵢᵀv)²`
//! - induced prior `C = (I − W)W⁺`: `vᵀCv = Σ (1 − sᵢ)/sᵢ · (uᵢᵀv)²`
//!
//! The induced prior is blind to the null space of the retained spectrum,
//! whereas the Laplacian penalises it with weight 1.

mod cache;

use std::fmt;

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::graphfilter::SmoothingFilter;
use crate::imgcore::Image;
use crate::linalg;

pub use cache::{decode_spectral, encode_spectral, load_spectral, save_spectral, SPECTRAL_MAGIC, SPECTRAL_VERSION};

/// Largest dimension accepted by the dense eigensolver.
pub const MAX_DENSE_DIM: usize = 16384;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PriorKind {
    /// `L = I − W`
    Conventional,
    /// `C = (I − W)W⁺`
    Induced,
}

impl PriorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::Conventional => "laplacian",
            PriorKind::Induced => "induced",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "laplacian" | "conventional" => Some(PriorKind::Conventional),
            "induced" => Some(PriorKind::Induced),
            _ => None,
        }
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Eigenvalue cut-off: pairs with `s ≤ threshold` are discarded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TruncTol {
    /// Fraction of the largest eigenvalue.
    Relative(f64),
    Absolute(f64),
}

impl Default for TruncTol {
    fn default() -> Self {
        TruncTol::Relative(1e-6)
    }
}

/// What the full eigendecomposition looked like before truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumStats {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub discarded: usize,
    pub discarded_negative: usize,
}

#[derive(Clone, Debug)]
pub struct SpectralFilter {
    n: usize,
    eigvals: Vec<f64>,
    /// `n × m`, columns orthonormal, matching `eigvals`.
    eigvecs: Mat<f64>,
    trunc_tol: f64,
    stats: Option<SpectrumStats>,
}

/// Full symmetric eigendecomposition of `W` (Householder tridiagonalisation
/// followed by implicit QR/divide-and-conquer, via faer), keeping eigenpairs
/// with `s > threshold` in descending order.
pub fn decompose(w: &SmoothingFilter, trunc: TruncTol) -> Result<SpectralFilter> {
    let n = w.n;
    if n > MAX_DENSE_DIM {
        return Err(Error::contract(format!(
            "dense eigendecomposition limited to n <= {MAX_DENSE_DIM}, got {n}"
        )));
    }
    let dense = w.weights.to_dense();
    let mat = linalg::mat_from_row_major(n, &dense);
    decompose_matrix(mat.as_ref(), trunc)
}

/// [`decompose`] for an explicit symmetric matrix.
pub fn decompose_matrix(mat: MatRef<'_, f64>, trunc: TruncTol) -> Result<SpectralFilter> {
    let n = mat.nrows();
    if mat.ncols() != n {
        return Err(Error::dims(format!("{n}x{n}"), format!("{}x{}", n, mat.ncols())));
    }
    if n == 0 {
        return Err(Error::contract("cannot decompose an empty filter"));
    }
    let evd = mat.self_adjoint_eigen(Side::Lower).map_err(|e| {
        Error::Numeric(format!("symmetric eigensolver did not converge for n={n}: {e:?}"))
    })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending eigenvalues.
    let order: Vec<usize> = (0..n).rev().collect();
    let largest = s[order[0]];
    let threshold = match trunc {
        TruncTol::Relative(r) => r * largest.max(0.0),
        TruncTol::Absolute(t) => t,
    };
    let kept: Vec<usize> = order.iter().copied().filter(|&i| s[i] > threshold).collect();
    let discarded_negative = (0..n).filter(|&i| s[i] < 0.0 && s[i] <= threshold).count();
    let eigvals = kept.iter().map(|&i| s[i]).collect();
    let eigvecs = Mat::from_fn(n, kept.len(), |r, k| u[(r, kept[k])]);
    Ok(SpectralFilter {
        n,
        eigvals,
        eigvecs,
        trunc_tol: threshold,
        stats: Some(SpectrumStats {
            min_eigenvalue: s[0],
            max_eigenvalue: largest,
            discarded: n - kept.len(),
            discarded_negative,
        }),
    })
}

impl SpectralFilter {
    /// Assembles a filter from known eigenpairs (`eigvecs` is `n × m`).
    pub fn from_parts(eigvals: Vec<f64>, eigvecs: Mat<f64>, trunc_tol: f64) -> Result<Self> {
        if eigvecs.ncols() != eigvals.len() {
            return Err(Error::dims(
                format!("{} eigenvector columns", eigvals.len()),
                eigvecs.ncols(),
            ));
        }
        if eigvals.windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::contract("eigenvalues must be sorted descending"));
        }
        Ok(SpectralFilter {
            n: eigvecs.nrows(),
            eigvals,
            eigvecs,
            trunc_tol,
            stats: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Retained rank.
    pub fn m(&self) -> usize {
        self.eigvals.len()
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> MatRef<'_, f64> {
        self.eigvecs.as_ref()
    }

    /// Absolute eigenvalue threshold that was applied.
    pub fn trunc_tol(&self) -> f64 {
        self.trunc_tol
    }

    pub fn stats(&self) -> Option<&SpectrumStats> {
        self.stats.as_ref()
    }

    /// True when the full spectrum left `[0, 1]` by more than `tol`.
    pub fn violates_unit_interval(&self, tol: f64) -> bool {
        match &self.stats {
            Some(s) => s.min_eigenvalue < -tol || s.max_eigenvalue > 1.0 + tol,
            None => self.eigvals.iter().any(|&s| s < -tol || s > 1.0 + tol),
        }
    }

    /// Per-eigenvector penalty of the prior: `1 − s` or `(1 − s)/s`.
    pub fn penalty_weights(&self, kind: PriorKind) -> Vec<f64> {
        self.eigvals
            .iter()
            .map(|&s| match kind {
                PriorKind::Conventional => 1.0 - s,
                PriorKind::Induced => (1.0 - s) / s,
            })
            .collect()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::dims(format!("{} pixels", self.n), format!("{} pixels", v.len())));
        }
        Ok(())
    }

    /// `Uᵀv`
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        linalg::mat_t_vec(self.eigvecs.as_ref(), v)
    }

    /// `U c`
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        linalg::mat_vec(self.eigvecs.as_ref(), c)
    }

    /// `UUᵀv`, the projection onto the retained eigenspace.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.synthesize(&self.coefficients(v))
    }

    /// `UΣUᵀv`
    pub fn apply_filter(&self, v: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = self.coefficients(v).iter().zip(&self.eigvals).map(|(c, s)| c * s).collect();
        self.synthesize(&c)
    }

    /// `M v` for the selected prior matrix.
    pub fn apply_prior(&self, kind: PriorKind, v: &[f64]) -> Vec<f64> {
        let c = self.coefficients(v);
        match kind {
            PriorKind::Conventional => {
                let sc: Vec<f64> = c.iter().zip(&self.eigvals).map(|(c, s)| c * s).collect();
                linalg::sub(v, &self.synthesize(&sc))
            }
            PriorKind::Induced => {
                let wc: Vec<f64> = c
                    .iter()
                    .zip(self.penalty_weights(kind))
                    .map(|(c, p)| c * p)
                    .collect();
                self.synthesize(&wc)
            }
        }
    }

    /// `vᵀMv`
    pub fn quadratic(&self, kind: PriorKind, v: &[f64]) -> f64 {
        let c = self.coefficients(v);
        match kind {
            PriorKind::Conventional => {
                let captured: f64 = c.iter().zip(&self.eigvals).map(|(c, s)| s * c * c).sum();
                linalg::dot(v, v) - captured
            }
            PriorKind::Induced => c
                .iter()
                .zip(self.penalty_weights(kind))
                .map(|(c, p)| p * c * c)
                .sum(),
        }
    }

    /// Exact minimiser of `½vᵀMv + ½‖v − ṽ‖²`, i.e. `(M + I)⁻¹ṽ`.
    ///
    /// For the induced prior this is `UΣUᵀṽ + (I − UUᵀ)ṽ`; for the Laplacian it
    /// is `U diag(1/(2 − s))Uᵀṽ + ½(I − UUᵀ)ṽ`.
    pub fn prox(&self, kind: PriorKind, vtilde: &[f64]) -> Vec<f64> {
        let c = self.coefficients(vtilde);
        match kind {
            PriorKind::Induced => {
                let d: Vec<f64> = c.iter().zip(&self.eigvals).map(|(c, s)| c * (s - 1.0)).collect();
                let mut out = vtilde.to_vec();
                linalg::axpy(1.0, &self.synthesize(&d), &mut out);
                out
            }
            PriorKind::Conventional => {
                let d: Vec<f64> = c
                    .iter()
                    .zip(&self.eigvals)
                    .map(|(c, s)| c * (1.0 / (2.0 - s) - 0.5))
                    .collect();
                let mut out: Vec<f64> = vtilde.iter().map(|v| 0.5 * v).collect();
                linalg::axpy(1.0, &self.synthesize(&d), &mut out);
                out
            }
        }
    }

    /// Explicit `n × n` prior matrix, for small problems and direct solves.
    pub fn prior_matrix(&self, kind: PriorKind) -> Mat<f64> {
        let weights = match kind {
            PriorKind::Conventional => self.eigvals.iter().map(|s| -s).collect::<Vec<_>>(),
            PriorKind::Induced => self.penalty_weights(kind),
        };
        let scaled = Mat::from_fn(self.n, self.m(), |i, k| self.eigvecs[(i, k)] * weights[k]);
        let mut m = &scaled * self.eigvecs.transpose();
        if kind == PriorKind::Conventional {
            for i in 0..self.n {
                m[(i, i)] += 1.0;
            }
        }
        m
    }
}

/// `vᵀMv` with `M = I − W` or `(I − W)W⁺`. The `ρ/2` weight is the caller's.
pub fn prior_quadratic(f: &SpectralFilter, kind: PriorKind, v: &Image) -> Result<f64> {
    f.check_len(v.data())?;
    Ok(f.quadratic(kind, v.data()))
}

/// `∇(vᵀMv) = 2Mv`
pub fn prior_gradient(f: &SpectralFilter, kind: PriorKind, v: &Image) -> Result<Image> {
    f.check_len(v.data())?;
    let g: Vec<f64> = f.apply_prior(kind, v.data()).iter().map(|x| 2.0 * x).collect();
    Image::with_shape_of(v, g)
}

/// Denoising step of the induced prior: the exact minimiser of
/// `½vᵀCv + ½‖v − ṽ‖²`. Equals `Wṽ` when the retained spectrum has full rank;
/// otherwise the component of `ṽ` outside the retained eigenspace passes
/// through unchanged.
pub fn prox_induced(f: &SpectralFilter, vtilde: &Image) -> Result<Image> {
    f.check_len(vtilde.data())?;
    Image::with_shape_of(vtilde, f.prox(PriorKind::Induced, vtilde.data()))
}
