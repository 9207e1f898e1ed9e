use crate::error::{Error, Result};
use crate::image::Image;

use super::reflect;

/// Normalized 1-D kernel `w(i) ∝ exp(-i²/2σ²)` for `|i| <= ceil(4σ)`,
/// indexed from `-radius` to `radius`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Symmetric 1-D pass. Mirror pairs are added before weighting so the
/// result is exactly mirror-equivariant.
fn convolve_line(src: &[f32], dst: &mut [f32], kernel: &[f64]) {
    let n = src.len();
    let r = kernel.len() / 2;
    for (x, out) in dst.iter_mut().enumerate() {
        let mut acc = kernel[r] * src[x] as f64;
        for k in 1..=r {
            let left = src[reflect(x as isize - k as isize, n)] as f64;
            let right = src[reflect((x + k) as isize, n)] as f64;
            acc += kernel[r + k] * (left + right);
        }
        *out = acc as f32;
    }
}

/// Separable Gaussian blur with reflected borders: rows first, then columns.
pub fn gaussian_filter(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = img.dims();
    let mut tmp = vec![0f32; w * h];
    for (src, dst) in img.data().chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
        convolve_line(src, dst, &kernel);
    }
    let mut out = vec![0f32; w * h];
    let mut col = vec![0f32; h];
    let mut col_out = vec![0f32; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = tmp[y * w + x];
        }
        convolve_line(&col, &mut col_out, &kernel);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    Image::from_clamped(w, h, out)
}
