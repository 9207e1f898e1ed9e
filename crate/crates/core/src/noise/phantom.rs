//! Synthetic ground-truth phantoms.
//!
//! `Nuclei` draws soft-edged ellipses on a dark background, loosely
//! resembling stained nuclei. `Granules` scatters small bright blobs inside
//! faint cell-shaped ellipses, resembling lipid granules in cytoplasm.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Nuclei,
    Granules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub cell_count: usize,
    pub modality: Modality,
    pub radius_min: f64,
    pub radius_max: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
    /// Granules per square pixel of cell area (`Granules` only).
    pub granule_density: f64,
    pub background: f64,
    pub rng_seed: u64,
}

impl PhantomSpec {
    pub fn nuclei(width: usize, height: usize, cell_count: usize, rng_seed: u64) -> Self {
        let short = width.min(height) as f64;
        Self {
            width,
            height,
            cell_count,
            modality: Modality::Nuclei,
            radius_min: (short * 0.06).max(2.0),
            radius_max: (short * 0.12).max(3.0),
            intensity_min: 0.25,
            intensity_max: 0.7,
            granule_density: 0.0,
            background: 0.02,
            rng_seed,
        }
    }

    pub fn granules(width: usize, height: usize, cell_count: usize, rng_seed: u64) -> Self {
        Self {
            modality: Modality::Granules,
            granule_density: 0.06,
            ..Self::nuclei(width, height, cell_count, rng_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let short = self.width.min(self.height) as f64;
        let ok = self.width > 0
            && self.height > 0
            && self.radius_min > 0.0
            && self.radius_min <= self.radius_max
            && 2.0 * self.radius_max <= short
            && self.intensity_min > 0.0
            && self.intensity_min <= self.intensity_max
            && self.intensity_max <= 1.0
            && (0.0..1.0).contains(&self.background)
            && self.granule_density >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid phantom spec: {self:?}"
            )))
        }
    }
}

/// Relative width of the soft edge around the unit ellipse boundary.
const EDGE: f64 = 0.2;

/// 1 inside `r <= 1 - EDGE`, 0 beyond `r >= 1 + EDGE`, raised-cosine between.
pub(crate) fn falloff(r: f64) -> f64 {
    if r <= 1.0 - EDGE {
        1.0
    } else if r >= 1.0 + EDGE {
        0.0
    } else {
        0.5 * (1.0 + (PI * (r - (1.0 - EDGE)) / (2.0 * EDGE)).cos())
    }
}

struct Cell {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
    intensity: f64,
}

impl Cell {
    /// Normalized elliptical radius of `(x, y)`; 1 on the boundary.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        ((u / self.rx).powi(2) + (v / self.ry).powi(2)).sqrt()
    }
}

struct Blob {
    x: f64,
    y: f64,
    radius: f64,
    intensity: f64,
}

pub fn render_phantom(spec: &PhantomSpec) -> Result<Image> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.rng_seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let margin = spec.radius_max;
    let mut cells = Vec::with_capacity(spec.cell_count);
    for _ in 0..spec.cell_count {
        let theta = rng.random_range(0.0..PI);
        cells.push(Cell {
            cx: rng.random_range(margin..=w - margin),
            cy: rng.random_range(margin..=h - margin),
            rx: rng.random_range(spec.radius_min..=spec.radius_max),
            ry: rng.random_range(spec.radius_min..=spec.radius_max),
            cos: theta.cos(),
            sin: theta.sin(),
            intensity: rng.random_range(spec.intensity_min..=spec.intensity_max),
        });
    }

    let mut blobs = Vec::new();
    if spec.modality == Modality::Granules {
        for cell in &cells {
            let area = PI * cell.rx * cell.ry;
            let count = (area * spec.granule_density).round() as usize;
            let mut placed = 0;
            while placed < count {
                let x = rng
                    .random_range(cell.cx - cell.rx.max(cell.ry)..=cell.cx + cell.rx.max(cell.ry));
                let y = rng
                    .random_range(cell.cy - cell.rx.max(cell.ry)..=cell.cy + cell.rx.max(cell.ry));
                if cell.radius(x, y) > 0.9 {
                    continue;
                }
                blobs.push(Blob {
                    x,
                    y,
                    radius: rng.random_range(0.8..=1.6),
                    intensity: cell.intensity * rng.random_range(0.6..=1.0),
                });
                placed += 1;
            }
        }
    }

    let cytoplasm = match spec.modality {
        Modality::Nuclei => 1.0,
        Modality::Granules => 0.25,
    };
    Image::from_fn(spec.width, spec.height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = spec.background;
        for c in &cells {
            let r = c.radius(px, py);
            if r < 1.0 + EDGE {
                v = v.max(
                    spec.background + (c.intensity - spec.background) * cytoplasm * falloff(r),
                );
            }
        }
        for b in &blobs {
            let d2 = (px - b.x).powi(2) + (py - b.y).powi(2);
            if d2 < 16.0 * b.radius * b.radius {
                v = v.max(b.intensity * (-d2 / (2.0 * b.radius * b.radius)).exp());
            }
        }
        v as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_is_uniform_background() {
        let spec = PhantomSpec::nuclei(32, 24, 0, 1);
        let img = render_phantom(&spec).unwrap();
        assert!(img.data().iter().all(|&v| v == spec.background as f32));
    }

    #[test]
    fn deterministic_per_seed() {
        for spec in [
            PhantomSpec::nuclei(48, 48, 5, 11),
            PhantomSpec::granules(48, 48, 3, 11),
        ] {
            assert_eq!(
                render_phantom(&spec).unwrap(),
                render_phantom(&spec).unwrap()
            );
            let other = PhantomSpec {
                rng_seed: 12,
                ..spec.clone()
            };
            assert_ne!(
                render_phantom(&spec).unwrap(),
                render_phantom(&other).unwrap()
            );
        }
    }

    #[test]
    fn centered_ellipse_interior_and_corner() {
        // radius range pinned so the single cell is a circle of radius 10
        let spec = PhantomSpec {
            width: 40,
            height: 40,
            cell_count: 1,
            modality: Modality::Nuclei,
            radius_min: 10.0,
            radius_max: 10.0,
            intensity_min: 0.8,
            intensity_max: 0.8,
            granule_density: 0.0,
            background: 0.02,
            rng_seed: 5,
        };
        let img = render_phantom(&spec).unwrap();
        // center is drawn from [10, 30]; locate the brightest pixel
        let (mut best, mut at) = (0.0, (0, 0));
        for y in 0..40 {
            for x in 0..40 {
                if img.get(x, y) > best {
                    best = img.get(x, y);
                    at = (x, y);
                }
            }
        }
        assert!((best - 0.8).abs() < 1e-6);
        // a pixel 5 px from the peak: r <= 0.5 + 0.1 keeps it on the plateau
        let interior = img.get(at.0 + 5, at.1);
        assert!(interior > 0.5 * 0.8, "{interior}");
        assert!((falloff(0.5) - 1.0).abs() < 1e-12);
        assert!(falloff(1.0) > 0.0 && falloff(1.0) < 1.0);
        assert_eq!(falloff(1.2), 0.0);
        // corners are farther than 1.2 * radius from any admissible center
        for (x, y) in [(0, 0), (39, 0), (0, 39), (39, 39)] {
            assert_eq!(img.get(x, y), 0.02);
        }
    }

    #[test]
    fn granules_are_brighter_than_cytoplasm() {
        let img = render_phantom(&PhantomSpec::granules(64, 64, 4, 3)).unwrap();
        let max = img.data().iter().cloned().fold(0.0, f32::max);
        assert!(max > 0.2);
        assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn rejects_oversized_radii() {
        let mut spec = PhantomSpec::nuclei(20, 20, 1, 0);
        spec.radius_max = 11.0;
        assert!(render_phantom(&spec).is_err());
    }
}
