//! Symmetric smoothing filters as image priors.
//!
//! A doubly stochastic non-local-means filter `W` used as the denoising step of
//! ADMM implicitly minimises the quadratic prior `(ρ/2)·xᵀ(I−W)W⁺x`. This crate
//! builds such filters from images, exposes both that induced prior and the
//! classical graph Laplacian `xᵀ(I−W)x`, and solves inpainting and deblurring
//! problems with them through a rank-truncated closed form, conjugate gradients,
//! or Plug-and-Play ADMM.
//!
//! Module map:
//!
//! - [`imgcore`]: images, masks, degradation, PSNR, Shepard interpolation, PGM I/O
//! - [`graphfilter`]: NLM kernel, symmetric Sinkhorn-Knopp balancing, filter cache
//! - [`spectral`]: truncated eigendecomposition of `W` and the two priors
//! - [`solvers`]: forward operators, closed-form / CG / ADMM solvers
//! - [`experiment`]: inpainting sweeps and prior comparison reports

pub mod error;
pub mod experiment;
pub mod graphfilter;
pub mod imgcore;
pub mod solvers;
pub mod spectral;

mod linalg;

pub use error::{Error, Result};
pub use graphfilter::{KernelMatrix, KernelParams, SearchWindow, SmoothingFilter};
pub use imgcore::{Image, NoiseSpec, SamplingMask};
pub use solvers::{ForwardOperator, SolveConfig, SolveReport, WMode};
pub use spectral::{PriorKind, SpectralFilter, TruncTol};

/// Configures worker parallelism for kernel construction, sweeps and dense
/// linear algebra. With `threads == 1` every code path is sequential and
/// results are bit-reproducible.
///
/// The rayon global pool can only be configured once per process; later calls
/// only adjust the dense linear algebra setting.
pub fn configure_threads(threads: usize) {
    let threads = threads.max(1);
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    let par = if threads == 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(threads)
    };
    faer::set_global_parallelism(par);
}
