use crate::error::{Error, Result};
use crate::image::Image;

/// Side of the SSIM window.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 1e-4; // (0.01 · 1.0)²
const C2: f64 = 9e-4; // (0.03 · 1.0)²

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`. Identical
/// images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if a.is_empty() {
        return Err(Error::Empty("PSNR of empty images".into()));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sum / a.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

fn window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" filtering: output is `(w − 10) × (h − 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k
                .iter()
                .zip(&line[x..x + SSIM_WINDOW])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean structural similarity over every fully valid 11×11 Gaussian window
/// (σ = 1.5), with dynamic range 1.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidImage(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = window();
    let fa: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let fb: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let aa: Vec<f64> = fa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = fb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let [ma, mb, maa, mbb, mab] = [&fa, &fb, &aa, &bb, &ab].map(|m| filter_valid(m, w, h, &k));
    let n = ma.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mua, mub) = (ma[i], mb[i]);
        let va = maa[i] - mua * mua;
        let vb = mbb[i] - mub * mub;
        let cov = mab[i] - mua * mub;
        total += ((2.0 * mua * mub + C1) * (2.0 * cov + C2))
            / ((mua * mua + mub * mub + C1) * (va + vb + C2));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = rng_from_seed(seed);
        Image::new(w, h, (0..w * h).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = Image::constant(8, 8, 0.25).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        // offsets that are exact in binary so the MSE is exact
        let b = Image::constant(8, 8, 0.75).unwrap();
        assert!((psnr(&a, &b).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 6.0206).abs() < 1e-4);
        assert!(psnr(&a, &Image::constant(8, 7, 0.0).unwrap()).is_err());
    }

    #[test]
    fn psnr_of_tenth_offset_is_twenty_db() {
        let a = random_image(16, 16, 1).map(|v| v * 0.8);
        let b = Image::new(16, 16, a.data().iter().map(|&v| v + 0.1).collect()).unwrap();
        // f32 storage perturbs the offset by at most an ulp
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = random_image(20, 17, 2);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let half = Image::constant(16, 16, 0.5).unwrap();
        let quarter = Image::constant(16, 16, 0.25).unwrap();
        let closed = (2.0 * 0.5 * 0.25 + C1) / (0.25 + 0.0625 + C1);
        assert!((ssim(&half, &quarter).unwrap() - closed).abs() < 1e-9);
        assert!(ssim(&half, &Image::constant(10, 16, 0.5).unwrap()).is_err());
    }

    #[test]
    fn inverted_checkerboard_is_anticorrelated() {
        let a = Image::from_fn(24, 24, |x, y| if (x + y) % 2 == 0 { 0.25 } else { 0.75 }).unwrap();
        let inv = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &inv).unwrap() < 0.0);
    }

    #[test]
    fn window_is_normalised_gaussian() {
        let k = window();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((k[5] / k[6] - (1.0 / (2.0 * 2.25f64)).exp()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn psnr_symmetric_and_monotone(seed in any::<u64>(), k in 0.01f32..0.2) {
            let a = random_image(12, 12, seed).map(|v| v * 0.5);
            let near = a.map(|v| v + k);
            let far = a.map(|v| v + 2.0 * k);
            prop_assert_eq!(psnr(&a, &near).unwrap(), psnr(&near, &a).unwrap());
            prop_assert!(psnr(&a, &near).unwrap() > psnr(&a, &far).unwrap());
        }

        #[test]
        fn ssim_symmetric_bounded_transpose_invariant(seed in any::<u64>(), w in 11usize..20, h in 11usize..20) {
            let a = random_image(w, h, seed);
            let b = random_image(w, h, seed ^ 77);
            let s = ssim(&a, &b).unwrap();
            prop_assert!(s.abs() <= 1.0);
            prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((s - ssim(&a.transpose(), &b.transpose()).unwrap()).abs() < 1e-9);
        }
    }
}
