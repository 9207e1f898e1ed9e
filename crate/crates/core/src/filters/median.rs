use crate::error::{Error, Result};
use crate::image::Image;

use super::reflect;

/// Window side used for a median "sigma" from the sweep list: odd values
/// are used as-is, even values are rounded up to the next odd size.
pub fn median_size_for_sigma(sigma: usize) -> usize {
    if sigma % 2 == 1 {
        sigma
    } else {
        sigma + 1
    }
}

/// Median over the `size`×`size` neighborhood with reflected borders.
pub fn median_filter(img: &Image, size: usize) -> Result<Image> {
    if size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "median window must be odd, got {size}"
        )));
    }
    if size == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let r = (size / 2) as isize;
    let mid = size * size / 2;
    let mut window = Vec::with_capacity(size * size);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            window.clear();
            for dy in -r..=r {
                let yy = reflect(y + dy, h);
                for dx in -r..=r {
                    window.push(img.get(reflect(x + dx, w), yy));
                }
            }
            let (_, m, _) = window.select_nth_unstable_by(mid, f32::total_cmp);
            out.push(*m);
        }
    }
    Image::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn size_one_is_identity() {
        let img = Image::from_fn(5, 4, |x, y| ((x * 7 + y * 3) % 10) as f32 / 10.0).unwrap();
        assert_eq!(median_filter(&img, 1).unwrap(), img);
    }

    #[test]
    fn removes_isolated_salt() {
        let img = Image::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { 1.0 } else { 0.2 }).unwrap();
        let out = median_filter(&img, 3).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn center_of_three_by_three() {
        let vals = [0.1, 0.9, 0.1, 0.9, 0.5, 0.1, 0.1, 0.1, 0.9];
        let img = Image::new(3, 3, vals.to_vec()).unwrap();
        let out = median_filter(&img, 3).unwrap();
        let mut sorted = vals;
        sorted.sort_by(f32::total_cmp);
        assert_eq!(sorted[4], 0.1);
        assert_eq!(out.get(1, 1), 0.1);
    }

    #[test]
    fn even_sizes_are_rejected_and_mapped() {
        assert!(median_filter(&Image::constant(3, 3, 0.0).unwrap(), 4).is_err());
        let sizes: Vec<usize> = [1, 3, 5, 10]
            .iter()
            .map(|&s| median_size_for_sigma(s))
            .collect();
        assert_eq!(sizes, vec![1, 3, 5, 11]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn commutes_with_monotone_remap(
            data in proptest::collection::vec(0.0f32..=1.0, 6 * 5),
            size in prop_oneof![Just(3usize), Just(5)],
        ) {
            let img = Image::new(6, 5, data).unwrap();
            let f = |v: f32| v * v;
            let a = median_filter(&img.map(f), size).unwrap();
            let b = median_filter(&img, size).unwrap().map(f);
            prop_assert_eq!(a, b);
            let lo = img.data().iter().cloned().fold(1.0, f32::min);
            let hi = img.data().iter().cloned().fold(0.0, f32::max);
            let c = median_filter(&img, size).unwrap();
            prop_assert!(c.data().iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
