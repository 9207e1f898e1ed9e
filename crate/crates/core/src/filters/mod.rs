//! Baseline denoisers and the Anscombe transform.

mod anscombe;
mod gaussian;
mod median;
mod nlm;

pub use anscombe::{anscombe, anscombe_inverse, anscombe_value};
pub use gaussian::{gaussian_filter, gaussian_kernel};
pub use median::{median_filter, median_size_for_sigma};
pub use nlm::{estimate_noise_sigma, nlm_filter, nlm_filter_with_sigma};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Index into `0..n` under half-sample symmetric reflection
/// (`d c b a | a b c d | d c b a`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterParams {
    Gaussian {
        sigma: f64,
    },
    Median {
        size: usize,
    },
    Nlm {
        h: f64,
        patch_radius: usize,
        search_radius: usize,
    },
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FilterParams::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            FilterParams::Median { size } => size % 2 == 1,
            FilterParams::Nlm {
                h,
                patch_radius,
                search_radius,
            } => h > 0.0 && patch_radius >= 1 && search_radius >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid filter parameters {self:?}"
            )))
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.validate()?;
        match *self {
            FilterParams::Gaussian { sigma } => gaussian_filter(img, sigma),
            FilterParams::Median { size } => median_filter(img, size),
            FilterParams::Nlm {
                h,
                patch_radius,
                search_radius,
            } => nlm_filter(img, h, patch_radius, search_radius),
        }
    }

    /// Method family name used in reports.
    pub fn method(&self) -> &'static str {
        match self {
            FilterParams::Gaussian { .. } => "gaussian",
            FilterParams::Median { .. } => "median",
            FilterParams::Nlm { .. } => "nlm",
        }
    }

    /// Parameter label used in reports, e.g. `3` or `h0.1_p1_s5`.
    pub fn param_label(&self) -> String {
        match *self {
            FilterParams::Gaussian { sigma } => format!("{sigma}"),
            FilterParams::Median { size } => format!("{size}"),
            FilterParams::Nlm {
                h,
                patch_radius,
                search_radius,
            } => format!("h{h}_p{patch_radius}_s{search_radius}"),
        }
    }
}
