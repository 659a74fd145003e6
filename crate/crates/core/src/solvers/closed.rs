use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use super::forward::ForwardOperator;
use super::{objective_raw, SolveConfig, SolveReport};
use crate::error::{Error, Result};
use crate::imgcore::Image;
use crate::linalg;
use crate::spectral::{PriorKind, SpectralFilter};

/// Cholesky pivots whose squared ratio falls below this trigger the
/// eigen-based pseudo-inverse instead.
pub const CONDITION_FLOOR: f64 = 1e-14;

/// Solves the symmetric system `mat · x = b`, by Cholesky when it is safely
/// positive definite and otherwise by an eigenvalue pseudo-inverse that drops
/// eigenvalues below `CONDITION_FLOOR · λ_max`. The second value is a warning
/// when the fallback was taken.
pub(crate) fn solve_symmetric(mat: MatRef<'_, f64>, b: &[f64], what: &str) -> Result<(Vec<f64>, Option<String>)> {
    let n = mat.nrows();
    if let Ok(llt) = mat.llt(Side::Lower) {
        let l = llt.L();
        let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = l[(i, i)];
            (lo.min(d), hi.max(d))
        });
        if n == 0 || (lo / hi).powi(2) >= CONDITION_FLOOR {
            let mut rhs = Mat::from_fn(n, 1, |i, _| b[i]);
            llt.solve_in_place(rhs.as_mut());
            let x: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
            if x.iter().all(|v| v.is_finite()) {
                return Ok((x, None));
            }
        }
    }
    let evd = mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigensolver failed on {n}x{n} {what}: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let top = (0..n).map(|i| s[i].abs()).fold(0.0, f64::max);
    let cut = CONDITION_FLOOR * top;
    let c = linalg::mat_t_vec(u, b);
    let mut dropped = 0;
    let scaled: Vec<f64> = (0..n)
        .map(|i| {
            if s[i] > cut {
                c[i] / s[i]
            } else {
                dropped += 1;
                0.0
            }
        })
        .collect();
    let x = linalg::mat_vec(u, &scaled);
    Ok((
        x,
        Some(format!(
            "{what} is singular or ill-conditioned; used pseudo-inverse ({dropped} of {n} directions dropped)"
        )),
    ))
}

/// `A V` for the retained eigenvectors `V`.
fn apply_to_columns(a: &ForwardOperator, v: MatRef<'_, f64>) -> Mat<f64> {
    match a {
        ForwardOperator::Mask(m) => {
            let keep = m.keep();
            Mat::from_fn(v.nrows(), v.ncols(), |i, k| if keep[i] { v[(i, k)] } else { 0.0 })
        }
        ForwardOperator::Conv2d { .. } => {
            let mut out = Mat::zeros(v.nrows(), v.ncols());
            for k in 0..v.ncols() {
                let col: Vec<f64> = (0..v.nrows()).map(|i| v[(i, k)]).collect();
                for (i, x) in a.apply(&col).into_iter().enumerate() {
                    out[(i, k)] = x;
                }
            }
            out
        }
    }
}

/// Rank-`m` reduction of the induced-prior normal equation. Writing
/// `x = V S q` turns `(AᵀA + ρC)x = Aᵀy` into
/// `(S VᵀAᵀAV S + ρ S(I − S)) q = S VᵀAᵀy`.
///
/// The `ρ`-independent parts are computed once so a sweep over `ρ` costs one
/// `m × m` factorisation per value.
pub struct ClosedFormSystem<'a> {
    filter: &'a SpectralFilter,
    gram: Mat<f64>,
    projected_rhs: Vec<f64>,
}

impl<'a> ClosedFormSystem<'a> {
    pub fn new(a: &ForwardOperator, y: &Image, filter: &'a SpectralFilter) -> Result<Self> {
        a.check(y)?;
        if filter.n() != a.n() {
            return Err(Error::dims(a.n(), filter.n()));
        }
        if filter.m() == 0 {
            return Err(Error::contract("spectral filter retained no eigenpairs (m = 0)"));
        }
        let av = apply_to_columns(a, filter.eigvecs());
        let gram = av.transpose() * &av;
        let projected_rhs = linalg::mat_t_vec(av.as_ref(), y.data());
        Ok(ClosedFormSystem {
            filter,
            gram,
            projected_rhs,
        })
    }

    pub fn rank(&self) -> usize {
        self.filter.m()
    }

    pub fn solve(&self, rho: f64) -> Result<(Vec<f64>, Vec<String>)> {
        let s = self.filter.eigvals();
        let m = s.len();
        let mut sys = Mat::from_fn(m, m, |i, j| s[i] * self.gram[(i, j)] * s[j]);
        for i in 0..m {
            sys[(i, i)] += rho * s[i] * (1.0 - s[i]);
        }
        let rhs: Vec<f64> = self.projected_rhs.iter().zip(s).map(|(b, s)| s * b).collect();
        let (q, warning) = solve_symmetric(sys.as_ref(), &rhs, "reduced closed-form system")?;
        let sq: Vec<f64> = q.iter().zip(s).map(|(q, s)| s * q).collect();
        Ok((self.filter.synthesize(&sq), warning.into_iter().collect()))
    }
}

fn direct_report(
    y: &Image,
    x: Vec<f64>,
    warnings: Vec<String>,
    solver: &'static str,
    kind: PriorKind,
    objective: f64,
    cfg: &SolveConfig,
    started: Instant,
) -> Result<SolveReport> {
    Ok(SolveReport {
        solution: Image::with_shape_of(y, x)?,
        iterations: 0,
        residual_history: Vec::new(),
        objective_value: Some(objective),
        wall_time: started.elapsed().as_secs_f64(),
        solver,
        prior: Some(kind),
        rho: cfg.rho,
        w_mode: cfg.w_mode,
        converged: true,
        warnings,
    })
}

/// Induced-prior solution through the reduced `m × m` system. The result lies
/// in the span of the retained eigenvectors.
pub fn solve_closed_form(
    a: &ForwardOperator,
    y: &Image,
    f: &SpectralFilter,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate(false)?;
    let started = Instant::now();
    let sys = ClosedFormSystem::new(a, y, f)?;
    let (x, warnings) = sys.solve(cfg.rho)?;
    let mx = f.apply_prior(PriorKind::Induced, &x);
    let obj = objective_raw(a, y.data(), &x, cfg.rho, &mx);
    direct_report(y, x, warnings, "closed", PriorKind::Induced, obj, cfg, started)
}

enum Gram {
    Diagonal(Vec<f64>),
    Dense(Mat<f64>),
}

/// Dense `n × n` normal equation `(AᵀA + ρM)x = Aᵀy` with `M` formed
/// explicitly. Used for the conventional prior, whose `M = I − W` has no
/// reduced form, and as an independent check of the other solvers.
pub struct DirectSystem {
    n: usize,
    gram: Gram,
    prior: Mat<f64>,
    rhs: Vec<f64>,
    kind: PriorKind,
}

impl DirectSystem {
    pub fn new(a: &ForwardOperator, y: &Image, f: &SpectralFilter, kind: PriorKind) -> Result<Self> {
        if f.n() != a.n() {
            return Err(Error::dims(a.n(), f.n()));
        }
        Self::with_prior(a, y, f.prior_matrix(kind), kind)
    }

    /// Uses an explicit `n × n` prior matrix, e.g. the exact `I − W`.
    pub fn with_prior(a: &ForwardOperator, y: &Image, prior: Mat<f64>, kind: PriorKind) -> Result<Self> {
        a.check(y)?;
        let n = a.n();
        if prior.nrows() != n || prior.ncols() != n {
            return Err(Error::dims(
                format!("{n}x{n} prior"),
                format!("{}x{}", prior.nrows(), prior.ncols()),
            ));
        }
        let gram = match a {
            ForwardOperator::Mask(m) => Gram::Diagonal(m.keep().iter().map(|&k| if k { 1.0 } else { 0.0 }).collect()),
            ForwardOperator::Conv2d { .. } => {
                let mut g = Mat::zeros(n, n);
                let mut e = vec![0.0; n];
                for j in 0..n {
                    e[j] = 1.0;
                    for (i, v) in a.normal(&e).into_iter().enumerate() {
                        g[(i, j)] = v;
                    }
                    e[j] = 0.0;
                }
                Gram::Dense(g)
            }
        };
        Ok(DirectSystem {
            n,
            gram,
            prior,
            rhs: a.apply_adjoint(y.data()),
            kind,
        })
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn solve(&self, rho: f64) -> Result<(Vec<f64>, Vec<String>)> {
        let mut sys = Mat::from_fn(self.n, self.n, |i, j| rho * self.prior[(i, j)]);
        match &self.gram {
            Gram::Diagonal(d) => {
                for (i, v) in d.iter().enumerate() {
                    sys[(i, i)] += v;
                }
            }
            Gram::Dense(g) => sys += g,
        }
        let (x, warning) = solve_symmetric(sys.as_ref(), &self.rhs, "normal-equation matrix")?;
        Ok((x, warning.into_iter().collect()))
    }
}

/// Dense direct solve of the normal equation for either prior.
pub fn solve_direct(
    a: &ForwardOperator,
    y: &Image,
    f: &SpectralFilter,
    kind: PriorKind,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate(false)?;
    let started = Instant::now();
    let sys = DirectSystem::new(a, y, f, kind)?;
    let (x, warnings) = sys.solve(cfg.rho)?;
    let mx = f.apply_prior(kind, &x);
    let obj = objective_raw(a, y.data(), &x, cfg.rho, &mx);
    direct_report(y, x, warnings, "direct", kind, obj, cfg, started)
}
