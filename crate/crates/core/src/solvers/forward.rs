use super::cg::conjugate_gradient;
use crate::error::{Error, Result};
use crate::imgcore::{Image, SamplingMask};

/// Small 2-D convolution kernel, row-major, anchored at `(rows/2, cols/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
}

impl Stencil {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || taps.len() != rows * cols {
            return Err(Error::dims(format!("{rows}x{cols} taps"), taps.len()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::contract("stencil taps must be finite"));
        }
        Ok(Stencil { rows, cols, taps })
    }

    pub fn identity() -> Self {
        Stencil {
            rows: 1,
            cols: 1,
            taps: vec![1.0],
        }
    }

    /// Normalised `(2r+1)²` box blur.
    pub fn box_blur(radius: usize) -> Self {
        let side = 2 * radius + 1;
        Stencil {
            rows: side,
            cols: side,
            taps: vec![1.0 / (side * side) as f64; side * side],
        }
    }

    /// Normalised Gaussian of standard deviation `sigma` truncated at `radius`.
    pub fn gaussian(radius: usize, sigma: f64) -> Self {
        let side = 2 * radius + 1;
        let r = radius as f64;
        let mut taps: Vec<f64> = (0..side * side)
            .map(|k| {
                let dy = (k / side) as f64 - r;
                let dx = (k % side) as f64 - r;
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Stencil {
            rows: side,
            cols: side,
            taps,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// The linear measurement operator `A`.
#[derive(Clone, Debug)]
pub enum ForwardOperator {
    /// Binary diagonal sampling (inpainting).
    Mask(SamplingMask),
    /// Circular 2-D convolution (deblurring).
    Conv2d {
        width: usize,
        height: usize,
        stencil: Stencil,
    },
}

impl ForwardOperator {
    pub fn conv2d(width: usize, height: usize, stencil: Stencil) -> Self {
        ForwardOperator::Conv2d {
            width,
            height,
            stencil,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            ForwardOperator::Mask(m) => m.shape(),
            ForwardOperator::Conv2d { width, height, .. } => (*width, *height),
        }
    }

    pub fn n(&self) -> usize {
        let (w, h) = self.shape();
        w * h
    }

    pub(crate) fn check(&self, img: &Image) -> Result<()> {
        if img.shape() != self.shape() {
            let (w, h) = self.shape();
            return Err(Error::dims(
                format!("operator {w}x{h}"),
                format!("image {}x{}", img.width(), img.height()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::dims(format!("{} pixels", self.n()), format!("{len} pixels")));
        }
        Ok(())
    }

    fn convolve(&self, x: &[f64], adjoint: bool) -> Vec<f64> {
        let ForwardOperator::Conv2d {
            width,
            height,
            stencil,
        } = self
        else {
            unreachable!()
        };
        let (w, h) = (*width as isize, *height as isize);
        let (cy, cx) = ((stencil.rows / 2) as isize, (stencil.cols / 2) as isize);
        let sign = if adjoint { 1 } else { -1 };
        let mut out = vec![0.0; x.len()];
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for a in 0..stencil.rows {
                    let sy = (y + sign * (a as isize - cy)).rem_euclid(h);
                    for b in 0..stencil.cols {
                        let sx = (xx + sign * (b as isize - cx)).rem_euclid(w);
                        acc += stencil.taps[a * stencil.cols + b] * x[(sy * w + sx) as usize];
                    }
                }
                out[(y * w + xx) as usize] = acc;
            }
        }
        out
    }

    /// `A x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ForwardOperator::Mask(m) => x
                .iter()
                .zip(m.keep())
                .map(|(&v, &k)| if k { v } else { 0.0 })
                .collect(),
            ForwardOperator::Conv2d { .. } => self.convolve(x, false),
        }
    }

    /// `Aᵀ z`; correlation with the stencil for convolutions.
    pub fn apply_adjoint(&self, z: &[f64]) -> Vec<f64> {
        match self {
            ForwardOperator::Mask(_) => self.apply(z),
            ForwardOperator::Conv2d { .. } => self.convolve(z, true),
        }
    }

    /// `AᵀA x`
    pub fn normal(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ForwardOperator::Mask(_) => self.apply(x),
            ForwardOperator::Conv2d { .. } => self.apply_adjoint(&self.apply(x)),
        }
    }

    /// Solves `(AᵀA + ρI) x = rhs`. Masks are diagonal and solved exactly;
    /// convolutions use conjugate gradients to relative residual `inner_tol`.
    pub fn solve_shifted(&self, rhs: &[f64], rho: f64, inner_tol: f64, inner_max_iters: usize) -> Result<Vec<f64>> {
        self.check_len(rhs.len())?;
        match self {
            ForwardOperator::Mask(m) => rhs
                .iter()
                .zip(m.keep())
                .map(|(&r, &k)| {
                    let d = if k { 1.0 + rho } else { rho };
                    if d > 0.0 {
                        Ok(r / d)
                    } else {
                        Err(Error::contract("(AᵀA + ρI) is singular on unobserved pixels with ρ = 0"))
                    }
                })
                .collect(),
            ForwardOperator::Conv2d { .. } => {
                let out = conjugate_gradient(
                    |v| {
                        let mut o = self.normal(v);
                        o.iter_mut().zip(v).for_each(|(a, b)| *a += rho * b);
                        o
                    },
                    rhs,
                    None,
                    inner_tol,
                    inner_max_iters,
                )?;
                Ok(out.x)
            }
        }
    }
}

pub fn apply_forward(a: &ForwardOperator, x: &Image) -> Result<Image> {
    a.check(x)?;
    Image::with_shape_of(x, a.apply(x.data()))
}

pub fn apply_adjoint(a: &ForwardOperator, z: &Image) -> Result<Image> {
    a.check(z)?;
    Image::with_shape_of(z, a.apply_adjoint(z.data()))
}
