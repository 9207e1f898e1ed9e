use super::Image;

pub const BINS: usize = 256;

/// 256-bin intensity histogram. Bin `b` covers `[b/256, (b+1)/256)`;
/// an intensity of exactly 1.0 lands in the last bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; BINS],
    total: u64,
}

impl Histogram {
    /// Builds a histogram directly from bin counts.
    pub fn from_counts(bins: [u64; BINS]) -> Self {
        let total = bins.iter().sum();
        Self { bins, total }
    }

    pub fn bins(&self) -> &[u64; BINS] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Index of the bin an intensity falls into.
    #[inline]
    pub fn bin_of(value: f32) -> usize {
        ((value * BINS as f32) as usize).min(BINS - 1)
    }

    fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.bins
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(b, _)| b)
    }
}

pub fn histogram(img: &Image) -> Histogram {
    let mut bins = [0u64; BINS];
    for &v in img.data() {
        bins[Histogram::bin_of(v)] += 1;
    }
    Histogram::from_counts(bins)
}

/// Histogram equalization through the cumulative distribution.
///
/// Each pixel is quantized to its bin `l` and mapped to
/// `(cdf(l) - cdf_min) / (total - cdf_min)`, then rounded to one of 256
/// output levels `k/255`. A single-level image has a degenerate CDF and is
/// returned unchanged.
pub fn equalize(img: &Image) -> Image {
    let hist = histogram(img);
    let mut cdf = [0u64; BINS];
    let mut acc = 0;
    for (c, &n) in cdf.iter_mut().zip(hist.bins.iter()) {
        acc += n;
        *c = acc;
    }
    let cdf_min = hist.occupied().next().map_or(0, |b| cdf[b]);
    let denom = hist.total - cdf_min;
    if denom == 0 {
        return img.clone();
    }
    let mut lut = [0f32; BINS];
    for (l, out) in lut.iter_mut().enumerate() {
        let m = cdf[l].saturating_sub(cdf_min) as f64 / denom as f64;
        *out = ((m.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32;
    }
    img.map(|v| lut[Histogram::bin_of(v)])
}

const ISODATA_MAX_ITER: usize = 256;

fn class_means(hist: &Histogram, t: usize) -> Option<(f64, f64)> {
    let (mut n_lo, mut s_lo, mut n_hi, mut s_hi) = (0u64, 0f64, 0u64, 0f64);
    for (b, &c) in hist.bins.iter().enumerate() {
        if b <= t {
            n_lo += c;
            s_lo += (b as u64 * c) as f64;
        } else {
            n_hi += c;
            s_hi += (b as u64 * c) as f64;
        }
    }
    if n_lo == 0 || n_hi == 0 {
        return None;
    }
    Some((s_lo / n_lo as f64, s_hi / n_hi as f64))
}

/// Ridler-Calvard (IsoData) threshold bin.
///
/// Starting from the global mean bin, iterates
/// `t <- floor((mean(bins <= t) + mean(bins > t)) / 2)` until `t` repeats,
/// for at most 256 iterations. When every pixel sits in one bin the
/// iteration is undefined and that bin is returned. Returns `None` for an
/// empty histogram.
pub fn isodata_bin(hist: &Histogram) -> Option<usize> {
    if hist.total == 0 {
        return None;
    }
    let mean = hist
        .bins
        .iter()
        .enumerate()
        .map(|(b, &c)| (b as u64 * c) as f64)
        .sum::<f64>()
        / hist.total as f64;
    let mut t = mean.floor() as usize;
    for _ in 0..ISODATA_MAX_ITER {
        let Some((lo, hi)) = class_means(hist, t) else {
            // single occupied bin
            return Some(t);
        };
        let next = ((lo + hi) / 2.0).floor() as usize;
        if next == t {
            break;
        }
        t = next;
    }
    Some(t)
}

/// IsoData threshold as an intensity level.
///
/// The level is the upper edge `(t + 1) / 256` of the threshold bin, clamped
/// to 1.0, so that under the strict test `intensity > level` exactly the
/// bins above `t` are foreground for quantized images, and a single-bin
/// image yields an empty foreground.
pub fn isodata_threshold(hist: &Histogram) -> f32 {
    match isodata_bin(hist) {
        Some(t) => ((t + 1) as f32 / BINS as f32).min(1.0),
        None => 1.0,
    }
}
