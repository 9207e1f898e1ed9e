use rayon::prelude::*;

use super::detector::{detect_frame, DetectorParams};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed::{derive_seed, stream};

/// Repeated noisy acquisitions of one location.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub frames: Vec<Image>,
    pub truth: Image,
    /// Pixelwise mean of the frames, filled in by [`average_stack`].
    pub answer: Option<Image>,
}

/// Seed of frame `index` within a stack seeded by `seed`.
pub fn frame_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, stream::FRAME, index as u64)
}

/// Draws `n_frames` independent detector frames. Frame `i` uses
/// [`frame_seed`]`(seed, i)`, so frames can be produced in parallel.
pub fn simulate_stack(
    truth: &Image,
    n_frames: usize,
    p: &DetectorParams,
    seed: u64,
) -> Result<FrameStack> {
    if n_frames == 0 {
        return Err(Error::InvalidParameter(
            "n_frames must be at least 1".into(),
        ));
    }
    let frames = (0..n_frames)
        .into_par_iter()
        .map(|i| detect_frame(truth, p, frame_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameStack {
        frames,
        truth: truth.clone(),
        answer: None,
    })
}

/// Running pixelwise mean, accumulated in f64 in frame order.
#[derive(Debug, Clone)]
pub(crate) struct MeanAccumulator {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    count: usize,
}

impl MeanAccumulator {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            sum: vec![0.0; width * height],
            count: 0,
        }
    }

    pub(crate) fn add(&mut self, frame: &Image) -> Result<()> {
        if frame.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                left: (self.width, self.height),
                right: frame.dims(),
            });
        }
        for (s, &v) in self.sum.iter_mut().zip(frame.data()) {
            *s += v as f64;
        }
        self.count += 1;
        Ok(())
    }

    pub(crate) fn finish(self) -> Result<Image> {
        if self.count == 0 {
            return Err(Error::Empty("cannot average zero frames".into()));
        }
        let n = self.count as f64;
        Image::from_clamped(
            self.width,
            self.height,
            self.sum.iter().map(|s| (s / n) as f32).collect(),
        )
    }
}

pub fn mean_of_frames(frames: &[Image]) -> Result<Image> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Empty("cannot average zero frames".into()))?;
    let mut acc = MeanAccumulator::new(first.width(), first.height());
    for f in frames {
        acc.add(f)?;
    }
    acc.finish()
}

/// Computes the low-noise answer as the pixelwise mean of all frames and
/// stores it in `stack.answer`.
pub fn average_stack(stack: &mut FrameStack) -> Result<Image> {
    let answer = mean_of_frames(&stack.frames)?;
    stack.answer = Some(answer.clone());
    Ok(answer)
}
