//! Pixelwise non-local means.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

use super::reflect;

/// Immerkær's noise estimate: mean absolute response to the Laplacian
/// difference mask `[1 -2 1; -2 4 -2; 1 -2 1]` over interior pixels.
pub fn estimate_noise_sigma(img: &Image) -> f64 {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return 0.0;
    }
    const MASK: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
    let mut sum = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut r = 0.0;
            for (dy, row) in MASK.iter().enumerate() {
                for (dx, m) in row.iter().enumerate() {
                    r += m * img.get(x + dx - 1, y + dy - 1) as f64;
                }
            }
            sum += r.abs();
        }
    }
    (std::f64::consts::PI / 2.0).sqrt() * sum / (6.0 * (w - 2) as f64 * (h - 2) as f64)
}

/// Non-local means with the noise level estimated by [`estimate_noise_sigma`].
pub fn nlm_filter(img: &Image, h: f64, patch_radius: usize, search_radius: usize) -> Result<Image> {
    nlm_filter_with_sigma(
        img,
        h,
        patch_radius,
        search_radius,
        estimate_noise_sigma(img),
    )
}

/// Each output pixel is the weighted mean of the pixels `q` in the search
/// window (clipped to the image) with weight
/// `exp(-max(d² - 2σ², 0) / h²)`, where `d²` is the mean squared difference
/// of the reflected patches around `p` and `q`. The centre pixel receives the
/// largest weight among the others.
pub fn nlm_filter_with_sigma(
    img: &Image,
    h: f64,
    patch_radius: usize,
    search_radius: usize,
    sigma: f64,
) -> Result<Image> {
    if h.is_nan() || h <= 0.0 || patch_radius == 0 || search_radius == 0 {
        return Err(Error::InvalidParameter(format!(
            "nlm needs h > 0 and radii >= 1 (h={h}, patch={patch_radius}, search={search_radius})"
        )));
    }
    let (w, ht) = img.dims();
    let pr = patch_radius as isize;
    let sr = search_radius as isize;
    let patch_len = ((2 * pr + 1) * (2 * pr + 1)) as f64;
    let bias = 2.0 * sigma * sigma;
    let h2 = h * h;

    let px = |x: isize, y: isize| img.get(reflect(x, w), reflect(y, ht)) as f64;
    let patch_dist = |x0: isize, y0: isize, x1: isize, y1: isize| {
        let mut d = 0.0;
        for dy in -pr..=pr {
            for dx in -pr..=pr {
                let diff = px(x0 + dx, y0 + dy) - px(x1 + dx, y1 + dy);
                d += diff * diff;
            }
        }
        d / patch_len
    };

    let rows: Vec<Vec<f32>> = (0..ht as isize)
        .into_par_iter()
        .map(|y| {
            (0..w as isize)
                .map(|x| {
                    let mut acc = 0.0;
                    let mut total = 0.0;
                    let mut wmax = 0.0f64;
                    for qy in (y - sr).max(0)..=(y + sr).min(ht as isize - 1) {
                        for qx in (x - sr).max(0)..=(x + sr).min(w as isize - 1) {
                            if qx == x && qy == y {
                                continue;
                            }
                            let d2 = patch_dist(x, y, qx, qy);
                            let wt = (-(d2 - bias).max(0.0) / h2).exp();
                            wmax = wmax.max(wt);
                            acc += wt * px(qx, qy);
                            total += wt;
                        }
                    }
                    let self_w = if wmax > 0.0 { wmax } else { 1.0 };
                    acc += self_w * px(x, y);
                    total += self_w;
                    (acc / total) as f32
                })
                .collect()
        })
        .collect();
    Image::from_clamped(w, ht, rows.concat())
}
