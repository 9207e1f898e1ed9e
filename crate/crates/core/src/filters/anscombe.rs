//! Anscombe variance-stabilizing transform.
//!
//! For counts `c = photon_scale * x`, `a(x) = 2 sqrt(c + 3/8)` has roughly
//! unit variance when `c` is Poisson. To stay inside `[0, 1]` the forward
//! map rescales `a` affinely from `[a(0), a(1)]` onto `[0, 1]`; the inverse
//! undoes that rescale and then the square root algebraically.

use crate::error::{Error, Result};
use crate::image::Image;

pub fn anscombe_value(count: f64) -> f64 {
    2.0 * (count + 3.0 / 8.0).sqrt()
}

fn range(photon_scale: f64) -> Result<(f64, f64)> {
    if photon_scale.is_nan() || photon_scale <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "photon_scale must be positive, got {photon_scale}"
        )));
    }
    Ok((anscombe_value(0.0), anscombe_value(photon_scale)))
}

pub fn anscombe(img: &Image, photon_scale: f64) -> Result<Image> {
    let (lo, hi) = range(photon_scale)?;
    let data = img
        .data()
        .iter()
        .map(|&x| ((anscombe_value(photon_scale * x as f64) - lo) / (hi - lo)) as f32)
        .collect();
    Image::from_clamped(img.width(), img.height(), data)
}

/// Algebraic inverse of [`anscombe`], clamped at zero.
pub fn anscombe_inverse(img: &Image, photon_scale: f64) -> Result<Image> {
    let (lo, hi) = range(photon_scale)?;
    let data = img
        .data()
        .iter()
        .map(|&r| {
            let a = r as f64 * (hi - lo) + lo;
            (((a / 2.0).powi(2) - 3.0 / 8.0) / photon_scale).max(0.0) as f32
        })
        .collect();
    Image::from_clamped(img.width(), img.height(), data)
}
