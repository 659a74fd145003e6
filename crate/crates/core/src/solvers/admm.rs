use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::forward::ForwardOperator;
use super::{objective_raw, SolveConfig, SolveReport, WMode};
use crate::error::{Error, Result};
use crate::graphfilter::{build_kernel, sinkhorn_balance, GuideTag, KernelParams, SinkhornOptions, SmoothingFilter};
use crate::imgcore::Image;
use crate::linalg::{axpy, norm, sub};
use crate::spectral::{PriorKind, SpectralFilter};

/// How to rebuild `W` from a guide image.
#[derive(Clone, Debug)]
pub struct FilterRecipe {
    pub params: KernelParams,
    pub sinkhorn: SinkhornOptions,
}

impl FilterRecipe {
    pub fn build(&self, guide: &Image) -> Result<SmoothingFilter> {
        let k = build_kernel(guide, &self.params)?;
        sinkhorn_balance(&k, self.sinkhorn.tol, self.sinkhorn.max_iters)
    }
}

/// The v-step of modular ADMM.
pub enum Denoiser<'a> {
    /// Plug-and-play: `v = W ṽ`.
    Filter(&'a SmoothingFilter),
    /// Exact prox `(M + I)⁻¹ṽ` of either prior through its eigenpairs.
    Prox(&'a SpectralFilter, PriorKind),
    /// Exact Laplacian prox `(2I − W)⁻¹ṽ` by inner CG; works for sparse `W`.
    LaplacianProx(&'a SmoothingFilter),
    /// `W` built from the initial image (FIXED) or from every iterate
    /// (ADAPTIVE).
    Rebuild(FilterRecipe),
}

/// Iterates of modular ADMM. `u_bar` is the scaled multiplier `u/ρ`.
#[derive(Clone, Debug)]
pub struct AdmmState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub k: usize,
    /// `‖x − v‖` after each iteration.
    pub primal_residual: Vec<f64>,
    /// `‖vᵏ − vᵏ⁻¹‖/‖vᵏ‖` of the latest iteration (scaled dual residual).
    pub v_change: f64,
}

fn relative_gap(x: &[f64], v: &[f64]) -> (f64, f64) {
    let gap = norm(&sub(x, v));
    let scale = norm(x);
    (gap, if scale > 0.0 { gap / scale } else { gap })
}

/// Modular ADMM stepper:
///
/// ```text
/// x ← argmin ½‖Ax − y‖² + (ρ/2)‖x − (v − ū)‖²
/// v ← D(x + ū)
/// ū ← ū + x − v
/// ```
pub struct ModularAdmm<'a> {
    a: &'a ForwardOperator,
    shape: &'a Image,
    aty: Vec<f64>,
    denoiser: &'a Denoiser<'a>,
    cfg: SolveConfig,
    fixed: Option<SmoothingFilter>,
    state: AdmmState,
}

impl<'a> ModularAdmm<'a> {
    pub fn new(
        a: &'a ForwardOperator,
        y: &'a Image,
        denoiser: &'a Denoiser<'a>,
        cfg: &SolveConfig,
        init: &Image,
    ) -> Result<Self> {
        cfg.validate(true)?;
        a.check(y)?;
        a.check(init)?;
        let n = a.n();
        let expect_n = |m: usize| if m == n { Ok(()) } else { Err(Error::dims(n, m)) };
        let fixed = match (denoiser, cfg.w_mode) {
            (Denoiser::Rebuild(recipe), WMode::Fixed) => Some(recipe.build(init)?),
            (Denoiser::Rebuild(_), WMode::Adaptive) => None,
            (_, WMode::Adaptive) => {
                return Err(Error::contract(
                    "adaptive W mode needs a filter recipe to rebuild from",
                ))
            }
            (Denoiser::Filter(w) | Denoiser::LaplacianProx(w), _) => {
                expect_n(w.n)?;
                None
            }
            (Denoiser::Prox(f, _), _) => {
                expect_n(f.n())?;
                None
            }
        };
        Ok(ModularAdmm {
            a,
            shape: y,
            aty: a.apply_adjoint(y.data()),
            denoiser,
            cfg: cfg.clone(),
            fixed,
            state: AdmmState {
                x: init.data().to_vec(),
                v: init.data().to_vec(),
                u_bar: vec![0.0; n],
                k: 0,
                primal_residual: Vec::new(),
                v_change: f64::INFINITY,
            },
        })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    fn denoise(&mut self, vtilde: &[f64]) -> Result<Vec<f64>> {
        let filter = match self.denoiser {
            Denoiser::Filter(w) => return Ok(w.weights.matvec(vtilde)),
            Denoiser::Prox(f, kind) => return Ok(f.prox(*kind, vtilde)),
            Denoiser::LaplacianProx(w) => {
                let out = super::cg::conjugate_gradient(
                    |v| {
                        let mut o = w.weights.matvec(v);
                        o.iter_mut().zip(v).for_each(|(o, v)| *o = 2.0 * v - *o);
                        o
                    },
                    vtilde,
                    None,
                    self.cfg.inner_tol,
                    self.cfg.inner_max_iters,
                )?;
                return Ok(out.x);
            }
            Denoiser::Rebuild(recipe) => match self.cfg.w_mode {
                WMode::Fixed => self.fixed.as_ref().expect("fixed filter is built in new"),
                WMode::Adaptive => {
                    let mut params = recipe.params;
                    params.guide_tag = GuideTag::Iterate;
                    let recipe = FilterRecipe {
                        params,
                        sinkhorn: recipe.sinkhorn,
                    };
                    let guide = Image::with_shape_of(self.shape, self.state.v.clone())?;
                    self.fixed = Some(recipe.build(&guide)?);
                    self.fixed.as_ref().unwrap()
                }
            },
        };
        Ok(filter.weights.matvec(vtilde))
    }

    /// One iteration; returns the relative primal residual `‖x − v‖/‖x‖`.
    pub fn step(&mut self) -> Result<f64> {
        let rho = self.cfg.rho;
        let mut rhs = self.aty.clone();
        let xtilde = sub(&self.state.v, &self.state.u_bar);
        axpy(rho, &xtilde, &mut rhs);
        let x = self
            .a
            .solve_shifted(&rhs, rho, self.cfg.inner_tol, self.cfg.inner_max_iters)?;
        let mut vtilde = x.clone();
        axpy(1.0, &self.state.u_bar, &mut vtilde);
        let v = self.denoise(&vtilde)?;
        let s = &mut self.state;
        s.u_bar.iter_mut().zip(x.iter().zip(&v)).for_each(|(u, (x, v))| *u += x - v);
        s.v_change = relative_gap(&v, &s.v).1;
        s.x = x;
        s.v = v;
        s.k += 1;
        let (gap, rel) = relative_gap(&s.x, &s.v);
        s.primal_residual.push(gap);
        Ok(rel)
    }
}

/// Textbook ADMM on `½‖Ax − y‖² + (λ·α)·vᵀCv` with `α = ρ/(2λ)` and the
/// unscaled multiplier:
///
/// ```text
/// x ← (AᵀA + ρI)⁻¹(Aᵀy − u + ρv)
/// v ← (2λα·C + ρI)⁻¹(ρx + u)
/// u ← u + ρ(x − v)
/// ```
pub struct RawAdmm<'a> {
    a: &'a ForwardOperator,
    aty: Vec<f64>,
    rho: f64,
    inner_tol: f64,
    inner_max_iters: usize,
    v_factor: faer::linalg::solvers::Llt<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub k: usize,
    /// `‖vᵏ − vᵏ⁻¹‖/‖vᵏ‖` of the latest iteration.
    pub v_change: f64,
}

impl<'a> RawAdmm<'a> {
    pub fn new(a: &'a ForwardOperator, y: &Image, f: &SpectralFilter, cfg: &SolveConfig, init: &Image) -> Result<Self> {
        cfg.validate(true)?;
        a.check(y)?;
        a.check(init)?;
        if f.n() != a.n() {
            return Err(Error::dims(a.n(), f.n()));
        }
        let n = a.n();
        let alpha = cfg.rho / (2.0 * cfg.lambda);
        let c = f.prior_matrix(PriorKind::Induced);
        let sys = Mat::from_fn(n, n, |i, j| {
            2.0 * cfg.lambda * alpha * c[(i, j)] + if i == j { cfg.rho } else { 0.0 }
        });
        let v_factor = sys
            .llt(Side::Lower)
            .map_err(|e| Error::Numeric(format!("raw ADMM v-system is not positive definite: {e:?}")))?;
        Ok(RawAdmm {
            a,
            aty: a.apply_adjoint(y.data()),
            rho: cfg.rho,
            inner_tol: cfg.inner_tol,
            inner_max_iters: cfg.inner_max_iters,
            v_factor,
            x: init.data().to_vec(),
            v: init.data().to_vec(),
            u: vec![0.0; n],
            k: 0,
            v_change: f64::INFINITY,
        })
    }

    pub fn step(&mut self) -> Result<f64> {
        let rho = self.rho;
        let rhs: Vec<f64> = self
            .aty
            .iter()
            .zip(self.u.iter().zip(&self.v))
            .map(|(b, (u, v))| b - u + rho * v)
            .collect();
        self.x = self.a.solve_shifted(&rhs, rho, self.inner_tol, self.inner_max_iters)?;
        let n = self.x.len();
        let mut b = Mat::from_fn(n, 1, |i, _| rho * self.x[i] + self.u[i]);
        self.v_factor.solve_in_place(b.as_mut());
        let v: Vec<f64> = (0..n).map(|i| b[(i, 0)]).collect();
        self.v_change = relative_gap(&v, &self.v).1;
        self.v = v;
        for i in 0..n {
            self.u[i] += rho * (self.x[i] - self.v[i]);
        }
        self.k += 1;
        Ok(relative_gap(&self.x, &self.v).1)
    }
}

fn admm_report(
    y: &Image,
    x: Vec<f64>,
    history: Vec<f64>,
    converged: bool,
    solver: &'static str,
    prior: Option<PriorKind>,
    objective: Option<f64>,
    cfg: &SolveConfig,
    started: Instant,
) -> Result<SolveReport> {
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "admm stopped at max_iters={} with relative primal residual {:e}",
            cfg.max_iters,
            history.last().copied().unwrap_or(f64::NAN)
        ));
    }
    if cfg.w_mode == WMode::Adaptive {
        warnings.push("adaptive W mode: no convergence guarantee".to_string());
    }
    Ok(SolveReport {
        solution: Image::with_shape_of(y, x)?,
        iterations: history.len(),
        residual_history: history,
        objective_value: objective,
        wall_time: started.elapsed().as_secs_f64(),
        solver,
        prior,
        rho: cfg.rho,
        w_mode: cfg.w_mode,
        converged,
        warnings,
    })
}

/// Plug-and-play ADMM from `x⁰ = v⁰ = init`, `ū⁰ = 0`. Stops once both
/// `‖x − v‖/‖x‖` and `‖vᵏ − vᵏ⁻¹‖/‖vᵏ‖` are `≤ tol`, or after `max_iters`.
/// A small primal residual alone is not enough: `x = v` can hold while both
/// still drift. `residual_history` records the primal residual. The returned
/// solution is `x`.
pub fn admm_pnp(
    a: &ForwardOperator,
    y: &Image,
    denoiser: &Denoiser<'_>,
    cfg: &SolveConfig,
    init: &Image,
) -> Result<SolveReport> {
    let started = Instant::now();
    let mut admm = ModularAdmm::new(a, y, denoiser, cfg, init)?;
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let rel = admm.step()?;
        history.push(rel);
        if rel <= cfg.tol && admm.state.v_change <= cfg.tol {
            converged = true;
            break;
        }
    }
    let x = admm.state.x;
    let (prior, objective) = match denoiser {
        Denoiser::Prox(f, kind) => {
            let mx = f.apply_prior(*kind, &x);
            (Some(*kind), Some(objective_raw(a, y.data(), &x, cfg.rho, &mx)))
        }
        Denoiser::LaplacianProx(w) => {
            let mx = sub(&x, &w.weights.matvec(&x));
            (
                Some(PriorKind::Conventional),
                Some(objective_raw(a, y.data(), &x, cfg.rho, &mx)),
            )
        }
        _ => (Some(PriorKind::Induced), None),
    };
    admm_report(y, x, history, converged, "admm", prior, objective, cfg, started)
}

/// Raw-form ADMM with the explicit induced quadratic; the reference that
/// modular ADMM is checked against.
pub fn admm_raw(
    a: &ForwardOperator,
    y: &Image,
    f: &SpectralFilter,
    cfg: &SolveConfig,
    init: &Image,
) -> Result<SolveReport> {
    let started = Instant::now();
    let mut admm = RawAdmm::new(a, y, f, cfg, init)?;
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let rel = admm.step()?;
        history.push(rel);
        if rel <= cfg.tol && admm.v_change <= cfg.tol {
            converged = true;
            break;
        }
    }
    let x = admm.x;
    let mx = f.apply_prior(PriorKind::Induced, &x);
    let obj = objective_raw(a, y.data(), &x, cfg.rho, &mx);
    admm_report(y, x, history, converged, "admm_raw", Some(PriorKind::Induced), Some(obj), cfg, started)
}
