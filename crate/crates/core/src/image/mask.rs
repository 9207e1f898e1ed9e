use super::{BinaryMask, Image, RgbImage};
use crate::error::{Error, Result};

/// Strict threshold: a pixel is foreground iff its intensity exceeds `t`.
pub fn binarize(img: &Image, t: f32) -> BinaryMask {
    let data = img.data().iter().map(|&v| v > t).collect();
    BinaryMask::new(img.width(), img.height(), data).expect("dimensions come from a valid image")
}

fn zip_masks(a: &BinaryMask, b: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    BinaryMask::new(a.width(), a.height(), data)
}

pub fn mask_and(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    zip_masks(a, b, |x, y| x && y)
}

/// Pixels set in `a` but not in `b`.
pub fn mask_minus(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    zip_masks(a, b, |x, y| x && !y)
}

pub fn mask_count(m: &BinaryMask) -> u64 {
    m.data().iter().filter(|&&v| v).count() as u64
}

/// Pseudocolor categories of the boundary overlay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayColor {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

impl OverlayColor {
    pub fn classify(in_output: bool, in_answer: bool) -> Self {
        match (in_output, in_answer) {
            (true, true) => Self::TruePositive,
            (true, false) => Self::FalsePositive,
            (false, true) => Self::FalseNegative,
            (false, false) => Self::TrueNegative,
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Self::TruePositive => [0, 0, 255],
            Self::FalsePositive => [255, 0, 255],
            Self::FalseNegative => [0, 255, 0],
            Self::TrueNegative => [0, 0, 0],
        }
    }
}

/// Superposition of denoised and answer masks: blue for overlap, magenta for
/// pixels only in `mask_o`, green for pixels only in `mask_ans`.
pub fn overlay(mask_o: &BinaryMask, mask_ans: &BinaryMask) -> Result<RgbImage> {
    if mask_o.dims() != mask_ans.dims() {
        return Err(Error::DimensionMismatch {
            left: mask_o.dims(),
            right: mask_ans.dims(),
        });
    }
    let data = mask_o
        .data()
        .iter()
        .zip(mask_ans.data())
        .map(|(&o, &a)| OverlayColor::classify(o, a).rgb())
        .collect();
    RgbImage::new(mask_o.width(), mask_o.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::equalize;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn binarize_is_strict() {
        let img = Image::new(3, 1, vec![0.5, 0.50001, 1.0]).unwrap();
        assert_eq!(binarize(&img, 0.5).data(), &[false, true, true]);
        assert_eq!(mask_count(&binarize(&img, 1.0)), 0);
        let zero = Image::constant(2, 2, 0.0).unwrap();
        assert_eq!(mask_count(&binarize(&zero, -0.0)), 0);
    }

    #[test]
    fn binarize_checkerboard() {
        let img = Image::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { 0.8 } else { 0.2 }).unwrap();
        let m = binarize(&img, 0.5);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(m.get(x, y), (x + y) % 2 == 0);
            }
        }
    }

    #[test]
    fn mask_algebra_identities() {
        let a = mask(3, 2, &[1, 0, 1, 1, 0, 0]);
        let none = BinaryMask::filled(3, 2, false).unwrap();
        assert_eq!(mask_and(&a, &a).unwrap(), a);
        assert_eq!(mask_and(&a, &none).unwrap(), none);
        assert_eq!(mask_minus(&a, &a).unwrap(), none);
        assert_eq!(mask_minus(&a, &none).unwrap(), a);
        assert_eq!(mask_count(&none), 0);
        assert_eq!(mask_count(&BinaryMask::filled(3, 3, true).unwrap()), 9);
        let other = BinaryMask::filled(2, 3, true).unwrap();
        assert!(matches!(
            mask_and(&a, &other),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(mask_minus(&a, &other).is_err());
        assert!(overlay(&a, &other).is_err());
    }

    #[test]
    fn overlay_colors() {
        let all = BinaryMask::filled(2, 2, true).unwrap();
        let none = BinaryMask::filled(2, 2, false).unwrap();
        assert!(overlay(&all, &all)
            .unwrap()
            .pixels()
            .iter()
            .all(|p| *p == [0, 0, 255]));
        assert!(overlay(&all, &none)
            .unwrap()
            .pixels()
            .iter()
            .all(|p| *p == [255, 0, 255]));
        let o = mask(3, 1, &[1, 1, 0]);
        let a = mask(3, 1, &[1, 0, 1]);
        assert_eq!(
            overlay(&o, &a).unwrap().pixels(),
            &[[0, 0, 255], [255, 0, 255], [0, 255, 0]]
        );
    }

    fn bits(n: usize) -> impl Strategy<Value = Vec<bool>> {
        proptest::collection::vec(any::<bool>(), n)
    }

    proptest! {
        #[test]
        fn mask_ops_match_pixel_loops(a in bits(35), b in bits(35)) {
            let ma = BinaryMask::new(7, 5, a.clone()).unwrap();
            let mb = BinaryMask::new(7, 5, b.clone()).unwrap();
            let and = mask_and(&ma, &mb).unwrap();
            let minus = mask_minus(&ma, &mb).unwrap();
            let mut count_a = 0;
            for i in 0..35 {
                prop_assert_eq!(and.data()[i], a[i] && b[i]);
                prop_assert_eq!(minus.data()[i], a[i] && !b[i]);
                if a[i] { count_a += 1; }
            }
            prop_assert_eq!(mask_count(&ma), count_a);
            prop_assert!(mask_count(&and) <= mask_count(&ma).min(mask_count(&mb)));
        }

        #[test]
        fn equalized_mask_is_invariant_under_monotone_level_remap(
            levels in proptest::collection::vec(0u32..150, 16..64),
            offset in 0u32..30,
            t in 0.0f32..1.0,
        ) {
            // strictly increasing integer remap keeps 8-bit levels in distinct bins
            let remap = |l: u32| l + l * l / 300 + offset;
            let n = levels.len();
            let img = Image::new(n, 1, levels.iter().map(|&l| l as f32 / 255.0).collect()).unwrap();
            let remapped = Image::new(
                n, 1,
                levels.iter().map(|&l| remap(l) as f32 / 255.0).collect(),
            ).unwrap();
            prop_assert_eq!(binarize(&equalize(&img), t), binarize(&equalize(&remapped), t));
        }
    }
}
