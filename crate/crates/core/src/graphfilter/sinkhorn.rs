use super::{balance_residual, KernelMatrix, SmoothingFilter, Weights};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            tol: 1e-8,
            max_iters: 10_000,
        }
    }
}

/// Balances a symmetric nonnegative kernel into a doubly stochastic `W = D K D`.
///
/// Uses the symmetric fixed point `d ← sqrt(d ⊘ K d)` from `d = 1`, stopping once
/// every row sum of `D K D` is within `tol` of 1 or after `max_iters` updates.
/// The result is symmetrised entrywise. Stopping above `tol` is not an error;
/// the filter carries a warning instead.
pub fn sinkhorn_balance(k: &KernelMatrix, tol: f64, max_iters: usize) -> Result<SmoothingFilter> {
    let mut w = balance_weights(&k.weights, tol, max_iters)?;
    w.params = Some(k.params);
    Ok(w)
}

/// [`sinkhorn_balance`] on raw weights.
pub fn balance_weights(k: &Weights, tol: f64, max_iters: usize) -> Result<SmoothingFilter> {
    let n = k.n();
    let mut kd = k.row_sums();
    if let Some(i) = kd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::contract(format!("kernel row {i} has no positive entry")));
    }
    let mut d = vec![1.0; n];
    let mut iterations = 0;
    loop {
        let res = d
            .iter()
            .zip(&kd)
            .map(|(di, ki)| (di * ki - 1.0).abs())
            .fold(0.0, f64::max);
        if res <= tol || iterations >= max_iters {
            break;
        }
        for (di, ki) in d.iter_mut().zip(&kd) {
            *di = (*di / ki).sqrt();
        }
        k.matvec_into(&d, &mut kd);
        iterations += 1;
    }

    // Same expression for (i,j) and (j,i), so the result is exactly symmetric.
    let scaled = |i: usize, j: usize, v: f64| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        0.5 * (d[a] * v * d[b] + d[b] * v * d[a])
    };
    let weights = match k {
        Weights::Dense { n, data } => {
            let mut out = vec![0.0; n * n];
            for i in 0..*n {
                for j in 0..*n {
                    out[i * n + j] = scaled(i, j, data[i * n + j]);
                }
            }
            Weights::Dense { n: *n, data: out }
        }
        Weights::Sparse {
            n,
            row_ptr,
            cols,
            vals,
        } => {
            let mut out = Vec::with_capacity(vals.len());
            for i in 0..*n {
                for p in row_ptr[i]..row_ptr[i + 1] {
                    out.push(scaled(i, cols[p], vals[p]));
                }
            }
            Weights::Sparse {
                n: *n,
                row_ptr: row_ptr.clone(),
                cols: cols.clone(),
                vals: out,
            }
        }
    };
    let residual = balance_residual(&weights);
    let warning = (residual > tol).then(|| {
        format!("sinkhorn stopped after {iterations} iterations with residual {residual:e} > tol {tol:e}")
    });
    Ok(SmoothingFilter {
        n,
        weights,
        balance_residual: residual,
        params: None,
        sinkhorn_iterations: iterations,
        warning,
    })
}
