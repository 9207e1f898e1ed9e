use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DdaeModel;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{mse_loss, AdamConfig, AdamState, Tensor4};
use crate::noise::{LocationEntry, Manifest, Split};
use crate::seed::{derive_seed, rng_from_seed, stream};

/// Samples per gradient work unit. Gradients of the units of a batch are
/// computed independently (possibly in parallel) and summed in unit order,
/// so results do not depend on the thread count.
const UNIT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub rng_seed: u64,
    /// Side of the square training crops; `None` trains on full frames.
    pub patch_size: Option<usize>,
    /// Noisy frames drawn per training location each epoch.
    pub frames_per_location: usize,
    pub patches_per_frame: usize,
    /// Leading frames of each validation location used for the
    /// validation loss.
    pub val_frames_per_location: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            adam: AdamConfig::default(),
            rng_seed: 0,
            patch_size: Some(64),
            frames_per_location: 16,
            patches_per_frame: 1,
            val_frames_per_location: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 || self.frames_per_location == 0 || self.patches_per_frame == 0 {
            return bad("batch size, frames per location and patches per frame must be positive");
        }
        if self.val_frames_per_location == 0 {
            return bad("val_frames_per_location must be positive");
        }
        if let Some(p) = self.patch_size {
            if p == 0 || p % 4 != 0 {
                return bad("patch size must be a positive multiple of 4");
            }
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
    /// Validation loss of the freshly initialised model.
    pub initial_val: f64,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train.iter().zip(&self.val).enumerate() {
            let _ = writeln!(s, "{},{t},{v}", i + 1);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: DdaeModel,
    pub curve: LossCurve,
    /// 1-based epoch the returned model comes from.
    pub best_epoch: usize,
}

struct Sample {
    location: usize,
    frame: usize,
    x0: usize,
    y0: usize,
}

struct TrainSet<'a> {
    root: &'a Path,
    locations: Vec<&'a LocationEntry>,
    answers: Vec<Image>,
}

impl<'a> TrainSet<'a> {
    fn open(root: &'a Path, manifest: &'a Manifest, split: Split) -> Result<Self> {
        let locations: Vec<_> = manifest.split(split).collect();
        if locations.is_empty() {
            return Err(Error::Dataset(format!(
                "no {split:?} locations in manifest"
            )));
        }
        let answers = locations
            .iter()
            .map(|l| {
                let a = l.load_answer(root)?;
                if a.dims() != (l.width, l.height)
                    || l.n_frames == 0
                    || l.frames.len() != l.n_frames
                {
                    return Err(Error::Dataset(format!(
                        "location {} is inconsistent with its manifest entry",
                        l.location_id
                    )));
                }
                Ok(a)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root,
            locations,
            answers,
        })
    }

    fn frame(&self, location: usize, frame: usize) -> Result<Image> {
        let img = self.locations[location].load_frame(self.root, frame)?;
        if img.dims() != self.answers[location].dims() {
            return Err(Error::DimensionMismatch {
                left: img.dims(),
                right: self.answers[location].dims(),
            });
        }
        Ok(img)
    }
}

fn epoch_samples(set: &TrainSet, cfg: &TrainConfig, epoch: usize) -> Result<Vec<Sample>> {
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, stream::EPOCH, epoch as u64));
    let mut out = Vec::new();
    for (li, loc) in set.locations.iter().enumerate() {
        let (w, h) = (loc.width, loc.height);
        let (pw, ph) = match cfg.patch_size {
            Some(p) if p > w || p > h => {
                return Err(Error::InvalidParameter(format!(
                    "patch size {p} exceeds the {w}x{h} frames of {}",
                    loc.location_id
                )))
            }
            Some(p) => (p, p),
            None if w % 4 != 0 || h % 4 != 0 => {
                return Err(Error::InvalidParameter(format!(
                    "full-frame training needs sides divisible by 4, got {w}x{h}"
                )))
            }
            None => (w, h),
        };
        let n = cfg.frames_per_location.min(loc.n_frames);
        let mut frames = sample(&mut rng, loc.n_frames, n).into_vec();
        frames.sort_unstable();
        for frame in frames {
            for _ in 0..cfg.patches_per_frame {
                out.push(Sample {
                    location: li,
                    frame,
                    x0: rng.random_range(0..=w - pw),
                    y0: rng.random_range(0..=h - ph),
                });
            }
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Loss-weighted gradient of one work unit.
fn unit_gradient(
    model: &DdaeModel,
    set: &TrainSet,
    samples: &[Sample],
    size: (usize, usize),
) -> Result<(f64, Vec<f32>)> {
    let (pw, ph) = size;
    let mut inputs = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let frame = set.frame(s.location, s.frame)?;
        inputs.push(frame.crop(s.x0, s.y0, pw, ph)?);
        targets.push(set.answers[s.location].crop(s.x0, s.y0, pw, ph)?);
    }
    let x = Tensor4::from_images(&inputs.iter().collect::<Vec<_>>())?;
    let t = Tensor4::from_images(&targets.iter().collect::<Vec<_>>())?;
    let net = model.network();
    let trace = net.forward_trace(&x)?;
    let (loss, grad) = mse_loss(trace.output(), &t)?;
    let grads = net.backward(&trace, &grad, false)?;
    Ok((loss, grads.flatten()))
}

/// Mean full-frame MSE between the model output and the answer over the
/// first `cfg.val_frames_per_location` frames of every validation location.
fn validation_loss(model: &DdaeModel, set: &TrainSet, cfg: &TrainConfig) -> Result<f64> {
    let jobs: Vec<(usize, usize)> = set
        .locations
        .iter()
        .enumerate()
        .flat_map(|(li, l)| (0..cfg.val_frames_per_location.min(l.n_frames)).map(move |f| (li, f)))
        .collect();
    let losses = jobs
        .par_iter()
        .map(|&(li, f)| {
            let out = model.denoise(&set.frame(li, f)?)?;
            let pred = Tensor4::<f32>::from_image(&out);
            Ok(mse_loss(&pred, &Tensor4::from_image(&set.answers[li]))?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains a fresh model (initialised from `cfg.rng_seed`) on the training
/// split of the dataset at `root` and keeps the best validation epoch.
pub fn train(
    root: impl AsRef<Path>,
    manifest: &Manifest,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let root = root.as_ref();
    let train_set = TrainSet::open(root, manifest, Split::Train)?;
    let val_set = TrainSet::open(root, manifest, Split::Val)?;

    let mut model = DdaeModel::build(cfg.rng_seed);
    // A sigmoid starting at 0.5 against mostly dark targets saturates within
    // a few steps and the ReLU layers behind it die.
    let target_mean = train_set
        .answers
        .iter()
        .flat_map(|a| a.data())
        .map(|&v| v as f64)
        .sum::<f64>()
        / train_set.answers.iter().map(|a| a.len()).sum::<usize>() as f64;
    model.set_output_mean(target_mean);
    let mut params = model.params();
    let mut adam = AdamState::new(params.len(), cfg.adam);
    let initial_val = validation_loss(&model, &val_set, cfg)?;
    log::info!("initial validation loss {initial_val:.6}");

    let mut curve = LossCurve {
        train: Vec::with_capacity(cfg.epochs),
        val: Vec::with_capacity(cfg.epochs),
        initial_val,
    };
    let mut best: Option<(f64, usize, Vec<f32>)> = None;
    for epoch in 0..cfg.epochs {
        let samples = epoch_samples(&train_set, cfg, epoch)?;
        let mut weighted = 0.0;
        for batch in samples.chunks(cfg.batch_size) {
            let size = match cfg.patch_size {
                Some(p) => (p, p),
                None => train_set.answers[batch[0].location].dims(),
            };
            let units = batch
                .par_chunks(UNIT)
                .map(|u| unit_gradient(&model, &train_set, u, size).map(|(l, g)| (u.len(), l, g)))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0f32; params.len()];
            let mut batch_loss = 0.0;
            for (n, loss, g) in &units {
                let share = *n as f32 / batch.len() as f32;
                grad.iter_mut().zip(g).for_each(|(a, &v)| *a += share * v);
                batch_loss += loss * *n as f64;
            }
            weighted += batch_loss;
            adam.step(&mut params, &grad)?;
            if params.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "training diverged in epoch {}",
                    epoch + 1
                )));
            }
            model.set_params(&params)?;
        }
        let train_loss = weighted / samples.len() as f64;
        let val_loss = validation_loss(&model, &val_set, cfg)?;
        log::info!(
            "epoch {}/{}: train {train_loss:.6} val {val_loss:.6}",
            epoch + 1,
            cfg.epochs
        );
        curve.train.push(train_loss);
        curve.val.push(val_loss);
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch + 1, params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    model.set_params(&best_params)?;
    Ok(TrainOutcome {
        model,
        curve,
        best_epoch,
    })
}
