use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{
    binarize, equalize, histogram, isodata_threshold, mask_and, mask_count, BinaryMask, Image,
};

/// Foreground overlap between a denoised image and the answer image.
/// Ratios whose denominator is zero are `None` rather than 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScores {
    pub count_o: u64,
    pub count_ans: u64,
    pub count_and: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl BoundaryScores {
    pub fn from_counts(count_o: u64, count_ans: u64, count_and: u64) -> Result<Self> {
        if count_and > count_o.min(count_ans) {
            return Err(Error::InvalidParameter(format!(
                "overlap {count_and} exceeds a mask count ({count_o}, {count_ans})"
            )));
        }
        let ratio = |den: u64| (den > 0).then(|| count_and as f64 / den as f64);
        let (precision, recall) = (ratio(count_o), ratio(count_ans));
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Ok(Self {
            count_o,
            count_ans,
            count_and,
            precision,
            recall,
            f1,
        })
    }
}

/// Equalises and IsoData-thresholds each image independently; returns the
/// output and answer foreground masks.
pub fn boundary_masks(output: &Image, answer: &Image) -> Result<(BinaryMask, BinaryMask)> {
    output.ensure_same_dims(answer)?;
    let mask = |img: &Image| {
        let eq = equalize(img);
        let t = isodata_threshold(&histogram(&eq));
        binarize(&eq, t)
    };
    Ok((mask(output), mask(answer)))
}

pub fn boundary_scores(output: &Image, answer: &Image) -> Result<BoundaryScores> {
    let (o, ans) = boundary_masks(output, answer)?;
    let both = mask_and(&o, &ans)?;
    BoundaryScores::from_counts(mask_count(&o), mask_count(&ans), mask_count(&both))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn identical_images_score_one() {
        let mut rng = rng_from_seed(3);
        let img = Image::new(32, 32, (0..1024).map(|_| rng.random::<f32>()).collect()).unwrap();
        let s = boundary_scores(&img, &img).unwrap();
        assert_eq!(
            (s.precision, s.recall, s.f1),
            (Some(1.0), Some(1.0), Some(1.0))
        );
        assert!(s.count_o > 0);
    }

    #[test]
    fn constant_images_are_undefined() {
        let img = Image::constant(16, 16, 0.4).unwrap();
        let s = boundary_scores(&img, &img).unwrap();
        assert_eq!(s.count_o, 0);
        assert_eq!((s.precision, s.recall, s.f1), (None, None, None));
    }

    #[test]
    fn count_examples() {
        let s = BoundaryScores::from_counts(70631, 63171, 48858).unwrap();
        assert!((s.precision.unwrap() - 0.69174).abs() < 5e-5);
        assert!((s.recall.unwrap() - 0.77342).abs() < 5e-5);
        assert!((s.f1.unwrap() - 0.7303).abs() < 5e-5);
        let s = BoundaryScores::from_counts(108887, 63171, 53800).unwrap();
        assert!((s.precision.unwrap() - 0.49409).abs() < 5e-5);
        assert!((s.recall.unwrap() - 0.85166).abs() < 5e-5);
        assert!((s.f1.unwrap() - 0.62537).abs() < 5e-5);
        assert!(BoundaryScores::from_counts(10, 20, 11).is_err());
        let disjoint = BoundaryScores::from_counts(5, 5, 0).unwrap();
        assert_eq!(disjoint.f1, Some(0.0));
        let empty_output = BoundaryScores::from_counts(0, 5, 0).unwrap();
        assert_eq!(
            (empty_output.precision, empty_output.recall, empty_output.f1),
            (None, Some(0.0), None)
        );
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::constant(4, 4, 0.1).unwrap();
        let b = Image::constant(4, 5, 0.1).unwrap();
        assert!(boundary_scores(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn f1_lies_between_precision_and_recall(o in 1u64..10_000, ans in 1u64..10_000, frac in 0.0f64..=1.0) {
            let and = (o.min(ans) as f64 * frac) as u64;
            let s = BoundaryScores::from_counts(o, ans, and).unwrap();
            let (p, r, f) = (s.precision.unwrap(), s.recall.unwrap(), s.f1.unwrap());
            prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
