//! Grayscale images, sampling masks, the degradation model `y = Ax + η`,
//! quality metrics and initial inpainting estimates.

mod pgm;
mod shepard;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use pgm::{decode_pgm, encode_pgm, load_mask, load_pgm, save_mask, save_pgm};
pub use shepard::{shepard_interpolate, ShepardParams};

/// Name of the pseudo-random generator behind every seeded operation.
/// Written into reports so runs can be reproduced.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.10, seed_from_u64); normals via rand_distr StandardNormal";

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-major grayscale raster. Intensities are nominally in `[0, 1]` but may
/// leave that range (noisy observations, unclamped reconstructions); they are
/// always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(
                format!("{} pixels ({width}x{height})", width * height),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "pixel {i} is not finite ({})",
                data[i]
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    /// Wraps a solver output vector in the shape of `like`.
    pub fn with_shape_of(like: &Image, data: Vec<f64>) -> Result<Self> {
        Image::new(like.width, like.height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn clamped(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Central `width × height` window; odd margins favour the top-left.
    pub fn center_crop(&self, width: usize, height: usize) -> Result<Image> {
        if width > self.width || height > self.height || width == 0 || height == 0 {
            return Err(Error::contract(format!(
                "cannot crop {width}x{height} from {}x{}",
                self.width, self.height
            )));
        }
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        Ok(Image::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }
}

/// Diagonal of the binary inpainting operator: `keep[i]` is `A_ii`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    width: usize,
    height: usize,
    keep: Vec<bool>,
    ratio: f64,
}

impl SamplingMask {
    pub fn new(width: usize, height: usize, keep: Vec<bool>, ratio: f64) -> Result<Self> {
        if keep.len() != width * height {
            return Err(Error::dims(
                format!("{} pixels ({width}x{height})", width * height),
                format!("{} flags", keep.len()),
            ));
        }
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::contract(format!(
                "sampling ratio {ratio} outside [0, 1]"
            )));
        }
        Ok(SamplingMask {
            width,
            height,
            keep,
            ratio,
        })
    }

    /// Mask whose nominal ratio is the observed kept fraction.
    pub fn from_keep(width: usize, height: usize, keep: Vec<bool>) -> Result<Self> {
        let n = keep.len().max(1);
        let ratio = keep.iter().filter(|&&k| k).count() as f64 / n as f64;
        Self::new(width, height, keep, ratio)
    }

    pub fn full(width: usize, height: usize) -> Self {
        SamplingMask {
            width,
            height,
            keep: vec![true; width * height],
            ratio: 1.0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.keep.len().max(1) as f64
    }

    /// The mask as a `{0, 1}` image.
    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::contract(format!("noise sigma {sigma} must be >= 0")));
        }
        Ok(NoiseSpec { sigma, seed })
    }

    pub fn noiseless() -> Self {
        NoiseSpec {
            sigma: 0.0,
            seed: 0,
        }
    }
}

/// Draws `keep[i] = (u_i < ratio)` with one uniform `u_i ∈ [0, 1)` per pixel in
/// raster order. Masks drawn from the same seed are nested: a pixel kept at
/// ratio `a` is also kept at every ratio `b > a`.
pub fn bernoulli_mask(width: usize, height: usize, ratio: f64, seed: u64) -> Result<SamplingMask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::contract(format!(
            "sampling ratio {ratio} outside [0, 1]"
        )));
    }
    let mut rng = seeded_rng(seed);
    let keep = (0..width * height)
        .map(|_| rng.random::<f64>() < ratio)
        .collect();
    SamplingMask::new(width, height, keep, ratio)
}

/// `y_i = keep_i · x_i + σ z_i` with `z_i ~ N(0, 1)`. Missing pixels observe pure
/// noise and nothing is clamped.
pub fn degrade(img: &Image, mask: &SamplingMask, noise: &NoiseSpec) -> Result<Image> {
    if img.shape() != mask.shape() {
        return Err(Error::dims(
            format!("{}x{}", img.width, img.height),
            format!("mask {}x{}", mask.width, mask.height),
        ));
    }
    let mut rng = seeded_rng(noise.seed);
    let data = img
        .data
        .iter()
        .zip(&mask.keep)
        .map(|(&x, &k)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let signal = if k { x } else { 0.0 };
            signal + noise.sigma * z
        })
        .collect();
    Image::new(img.width, img.height, data)
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    reference.check_same_shape(test)?;
    let sum: f64 = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len().max(1) as f64)
}

/// Peak signal-to-noise ratio in dB for unit peak intensity. Identical images
/// give `f64::INFINITY`.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    let mse = mse(reference, test)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}
