//! Stochastic-resonance detector model.
//!
//! A pixel with true signal `S` yields `n ~ Poisson(gain * S)` photons,
//! `s = n / photon_scale`, plus additive detector noise `v ~ N(0, sigma_v)`.
//! The recorded value is `s + v - T` when `s + v > T` and exactly zero
//! otherwise, clamped to `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed::rng_from_seed;

/// Poisson means above this use the Gaussian approximation.
const POISSON_INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Expected photon count per unit of true signal.
    pub gain: f64,
    /// Standard deviation of the additive detector noise.
    pub sigma_v: f64,
    /// Detection threshold `T`.
    pub threshold: f64,
    /// Divisor mapping photon counts back to intensity.
    pub photon_scale: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            gain: 30.0,
            sigma_v: 0.12,
            threshold: 0.24,
            photon_scale: 30.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gain > 0.0
            && self.sigma_v >= 0.0
            && self.threshold >= 0.0
            && self.photon_scale > 0.0
            && [self.gain, self.sigma_v, self.threshold, self.photon_scale]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "detector parameters out of range: {self:?}"
            )))
        }
    }
}

/// Which parts of the detector are stochastic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// Poisson photons and Gaussian detector noise.
    Full,
    /// Photon count replaced by its mean; Gaussian detector noise kept.
    MeanPhotons,
    /// Photon count replaced by its mean and `v` fixed to the given value.
    Fixed { additive: f64 },
}

/// Thresholded response `y = s + v - T` if `s + v > T`, else 0, clamped to 1.
#[inline]
pub fn detector_response(s: f64, v: f64, threshold: f64) -> f32 {
    let x = s + v;
    if x > threshold {
        (x - threshold).min(1.0) as f32
    } else {
        0.0
    }
}

/// Poisson draw: inversion by sequential search for small means, rounded
/// Gaussian approximation above [`POISSON_INVERSION_LIMIT`].
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > POISSON_INVERSION_LIMIT {
        let z: f64 = StandardNormal.sample(rng);
        return (mean + mean.sqrt() * z).round().max(0.0) as u64;
    }
    let u: f64 = rng.random();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u64;
    // the tail beyond 1000 is far below f64 resolution for mean <= 30
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

pub fn detect_frame(truth: &Image, p: &DetectorParams, seed: u64) -> Result<Image> {
    detect_frame_with(truth, p, seed, NoiseMode::Full)
}

pub fn detect_frame_with(
    truth: &Image,
    p: &DetectorParams,
    seed: u64,
    mode: NoiseMode,
) -> Result<Image> {
    p.validate()?;
    let mut rng = rng_from_seed(seed);
    let data = truth
        .data()
        .iter()
        .map(|&signal| {
            let mean = p.gain * signal as f64;
            let s = match mode {
                NoiseMode::Full => sample_poisson(&mut rng, mean) as f64 / p.photon_scale,
                _ => mean / p.photon_scale,
            };
            let v = match mode {
                NoiseMode::Fixed { additive } => additive,
                _ if p.sigma_v == 0.0 => 0.0,
                _ => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    p.sigma_v * z
                }
            };
            detector_response(s, v, p.threshold)
        })
        .collect();
    Image::new(truth.width(), truth.height(), data)
}
