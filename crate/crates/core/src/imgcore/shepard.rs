use super::{Image, SamplingMask};
use crate::error::{Error, Result};

/// Inverse-distance weighting parameters: weights `d^(-power)` over kept pixels
/// inside a square window of `radius`, doubled until a donor is found.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShepardParams {
    pub power: f64,
    pub radius: usize,
}

impl Default for ShepardParams {
    fn default() -> Self {
        ShepardParams {
            power: 2.0,
            radius: 3,
        }
    }
}

/// Fills missing pixels of `observed` by Shepard interpolation from the kept ones.
/// Kept pixels are copied unchanged.
pub fn shepard_interpolate(observed: &Image, mask: &SamplingMask, params: ShepardParams) -> Result<Image> {
    let (w, h) = observed.shape();
    if mask.shape() != (w, h) {
        return Err(Error::dims(
            format!("{w}x{h}"),
            format!("mask {}x{}", mask.width(), mask.height()),
        ));
    }
    if mask.kept_count() == 0 {
        return Err(Error::contract("Shepard interpolation needs at least one kept pixel"));
    }
    let keep = mask.keep();
    let src = observed.data();
    let mut out = src.to_vec();
    let max_radius = w.max(h);

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if keep[i] {
                continue;
            }
            let mut radius = params.radius.max(1);
            loop {
                let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
                let mut num = 0.0;
                let mut den = 0.0;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let j = yy * w + xx;
                        if !keep[j] {
                            continue;
                        }
                        let dx = xx as f64 - x as f64;
                        let dy = yy as f64 - y as f64;
                        let d = (dx * dx + dy * dy).sqrt();
                        let wt = d.powf(-params.power);
                        num += wt * src[j];
                        den += wt;
                    }
                }
                if den > 0.0 {
                    out[i] = num / den;
                    break;
                }
                if radius >= max_radius {
                    // Unreachable with a nonempty mask: the window covers the image.
                    return Err(Error::contract("no kept pixel reachable"));
                }
                radius *= 2;
            }
        }
    }
    Image::new(w, h, out)
}
