//! Forward operators and solvers for `½‖Ax − y‖² + (ρ/2)·xᵀMx`.

mod admm;
mod cg;
mod closed;
mod forward;

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::time::Duration;

pub use admm::{admm_pnp, admm_raw, AdmmState, Denoiser, FilterRecipe, ModularAdmm, RawAdmm};
pub use cg::{conjugate_gradient, solve_cg, solve_cg_laplacian, CgOutcome};
pub use closed::{solve_closed_form, solve_direct, ClosedFormSystem, DirectSystem, CONDITION_FLOOR};
pub use forward::{apply_adjoint, apply_forward, ForwardOperator, Stencil};

use crate::error::{Error, Result};
use crate::imgcore::Image;
use crate::linalg::{dot, sub};
use crate::spectral::{PriorKind, SpectralFilter};

/// Whether ADMM keeps one `W` or rebuilds it from every iterate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WMode {
    #[default]
    Fixed,
    Adaptive,
}

impl WMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WMode::Fixed => "fixed",
            WMode::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(WMode::Fixed),
            "adaptive" => Some(WMode::Adaptive),
            _ => None,
        }
    }
}

impl fmt::Display for WMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub rho: f64,
    /// Absorbed into the effective prior weight; only the raw ADMM form uses it.
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub w_mode: WMode,
    /// Tolerance of inner CG solves (convolution x-steps, Laplacian prox).
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rho: 1.0,
            lambda: 1.0,
            max_iters: 500,
            tol: 1e-6,
            w_mode: WMode::Fixed,
            inner_tol: 1e-10,
            inner_max_iters: 1000,
        }
    }
}

impl SolveConfig {
    /// Direct and CG solves accept `ρ = 0` (pure data fit); ADMM needs `ρ > 0`.
    pub fn validate(&self, admm: bool) -> Result<()> {
        let rho_ok = if admm { self.rho > 0.0 } else { self.rho >= 0.0 };
        if !rho_ok || !self.rho.is_finite() {
            return Err(Error::contract(format!("rho={} out of range", self.rho)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::contract(format!("lambda={} must be > 0", self.lambda)));
        }
        if !(self.tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::contract("tolerances must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: Image,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub objective_value: Option<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub solver: &'static str,
    pub prior: Option<PriorKind>,
    pub rho: f64,
    pub w_mode: WMode,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn wall_duration(&self) -> Duration {
        Duration::from_secs_f64(self.wall_time)
    }

    /// Line-oriented `key=value` record.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "solver={}", self.solver);
        if let Some(p) = self.prior {
            let _ = writeln!(s, "prior={p}");
        }
        let _ = writeln!(s, "rho={}", self.rho);
        let _ = writeln!(s, "w_mode={}", self.w_mode);
        let _ = writeln!(s, "width={}", self.solution.width());
        let _ = writeln!(s, "height={}", self.solution.height());
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "converged={}", self.converged);
        if let Some(r) = self.residual_history.last() {
            let _ = writeln!(s, "final_residual={r:e}");
        }
        if let Some(o) = self.objective_value {
            let _ = writeln!(s, "objective={o}");
        }
        let _ = writeln!(s, "wall_time={:.6}", self.wall_time);
        for w in &self.warnings {
            let _ = writeln!(s, "warning={w}");
        }
        s
    }

    /// `iteration,residual` rows, 1-based.
    pub fn residual_csv(&self) -> String {
        let mut s = String::from("iteration,residual\n");
        for (i, r) in self.residual_history.iter().enumerate() {
            let _ = writeln!(s, "{},{r:e}", i + 1);
        }
        s
    }

    pub fn write_record(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_record())?;
        Ok(())
    }

    pub fn write_residual_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.residual_csv())?;
        Ok(())
    }
}

/// `½‖Ax − y‖² + (ρ/2)·xᵀ(Mx)` with `Mx` supplied.
pub(crate) fn objective_raw(a: &ForwardOperator, y: &[f64], x: &[f64], rho: f64, mx: &[f64]) -> f64 {
    let r = sub(&a.apply(x), y);
    0.5 * dot(&r, &r) + 0.5 * rho * dot(x, mx)
}

/// `φ(x) = ½‖Ax − y‖² + (ρ/2)·xᵀMx`
pub fn objective(
    a: &ForwardOperator,
    y: &Image,
    f: &SpectralFilter,
    kind: PriorKind,
    rho: f64,
    x: &Image,
) -> Result<f64> {
    a.check(y)?;
    a.check(x)?;
    if f.n() != a.n() {
        return Err(Error::dims(a.n(), f.n()));
    }
    let r = sub(&a.apply(x.data()), y.data());
    Ok(0.5 * dot(&r, &r) + 0.5 * rho * f.quadratic(kind, x.data()))
}
