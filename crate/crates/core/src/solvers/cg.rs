use std::time::Instant;

use super::forward::ForwardOperator;
use super::{objective_raw, SolveConfig, SolveReport};
use crate::error::{Error, Result};
use crate::graphfilter::SmoothingFilter;
use crate::imgcore::Image;
use crate::linalg::{axpy, dot, norm, sub};
use crate::spectral::{PriorKind, SpectralFilter};

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖b − Ax‖/‖b‖` after each iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// Matrix-free conjugate gradients for a symmetric positive (semi)definite
/// operator. Convergence is confirmed against the true residual, so the
/// returned iterate satisfies `‖b − Ax‖ ≤ tol·‖b‖` whenever `converged`.
pub fn conjugate_gradient<F>(
    mut op: F,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let b_norm = norm(b);
    let mut x = match x0 {
        Some(x0) if x0.len() != n => return Err(Error::dims(n, x0.len())),
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if b_norm == 0.0 && x0.is_none() {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual_history: Vec::new(),
            converged: true,
        });
    }
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut r = match x0 {
        Some(_) => sub(b, &op(&x)),
        None => b.to_vec(),
    };
    if norm(&r) <= tol * scale {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual_history: Vec::new(),
            converged: true,
        });
    }
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut history = Vec::new();
    for k in 1..=max_iters {
        let ap = op(&p);
        let curv = dot(&p, &ap);
        if !(curv > 1e-14 * dot(&p, &p)) {
            return Err(Error::Numeric(format!(
                "conjugate gradient breakdown at iteration {k}: nonpositive curvature pᵀAp = {curv:e}"
            )));
        }
        let alpha = rs / curv;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let mut rel = norm(&r) / scale;
        let mut restart = false;
        if rel <= tol {
            // The recursive residual drifts; recompute before accepting.
            r = sub(b, &op(&x));
            rel = norm(&r) / scale;
            restart = true;
        }
        history.push(rel);
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iterations: k,
                residual_history: history,
                converged: true,
            });
        }
        let rs_new = dot(&r, &r);
        if restart {
            p.copy_from_slice(&r);
        } else {
            let beta = rs_new / rs;
            p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        }
        rs = rs_new;
    }
    Ok(CgOutcome {
        x,
        iterations: max_iters,
        residual_history: history,
        converged: false,
    })
}

fn normal_equation_cg<M>(
    a: &ForwardOperator,
    y: &Image,
    rho: f64,
    apply_m: M,
    cfg: &SolveConfig,
) -> Result<CgOutcome>
where
    M: Fn(&[f64]) -> Vec<f64>,
{
    let aty = a.apply_adjoint(y.data());
    conjugate_gradient(
        |v| {
            let mut out = a.normal(v);
            axpy(rho, &apply_m(v), &mut out);
            out
        },
        &aty,
        None,
        cfg.tol,
        cfg.max_iters,
    )
}

fn finish(
    y: &Image,
    out: CgOutcome,
    solver: &'static str,
    prior: PriorKind,
    cfg: &SolveConfig,
    objective: Option<f64>,
    started: Instant,
) -> Result<SolveReport> {
    let mut warnings = Vec::new();
    if !out.converged {
        warnings.push(format!(
            "cg stopped at max_iters={} with relative residual {:e}",
            cfg.max_iters,
            out.residual_history.last().copied().unwrap_or(f64::NAN)
        ));
    }
    Ok(SolveReport {
        solution: Image::with_shape_of(y, out.x)?,
        iterations: out.iterations,
        residual_history: out.residual_history,
        objective_value: objective,
        wall_time: started.elapsed().as_secs_f64(),
        solver,
        prior: Some(prior),
        rho: cfg.rho,
        w_mode: cfg.w_mode,
        converged: out.converged,
        warnings,
    })
}

/// Solves `(AᵀA + ρM) x = Aᵀy` matrix-free, with `M` applied through the
/// spectral factors.
pub fn solve_cg(
    a: &ForwardOperator,
    y: &Image,
    f: &SpectralFilter,
    kind: PriorKind,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate(false)?;
    a.check(y)?;
    if f.n() != a.n() {
        return Err(Error::dims(a.n(), f.n()));
    }
    let started = Instant::now();
    let out = normal_equation_cg(a, y, cfg.rho, |v| f.apply_prior(kind, v), cfg)?;
    let obj = objective_raw(a, y.data(), &out.x, cfg.rho, &f.apply_prior(kind, &out.x));
    finish(y, out, "cg", kind, cfg, Some(obj), started)
}

/// Conventional prior `M = I − W` straight from the (possibly sparse) filter,
/// with no eigendecomposition.
pub fn solve_cg_laplacian(
    a: &ForwardOperator,
    y: &Image,
    w: &SmoothingFilter,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate(false)?;
    a.check(y)?;
    if w.n != a.n() {
        return Err(Error::dims(a.n(), w.n));
    }
    let started = Instant::now();
    let lap = |v: &[f64]| sub(v, &w.weights.matvec(v));
    let out = normal_equation_cg(a, y, cfg.rho, lap, cfg)?;
    let obj = objective_raw(a, y.data(), &out.x, cfg.rho, &lap(&out.x));
    finish(y, out, "cg", PriorKind::Conventional, cfg, Some(obj), started)
}
