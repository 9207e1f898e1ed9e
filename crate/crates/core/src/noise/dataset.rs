//! On-disk frame-stack datasets.
//!
//! Layout: `<root>/<location_id>/frame_000.tiff ...`, `truth.tiff`,
//! `answer.tiff` (all 16-bit) and `<root>/manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detector::{detect_frame, DetectorParams};
use super::phantom::{render_phantom, Modality, PhantomSpec};
use super::stack::{frame_seed, MeanAccumulator};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, BitDepth, Image};
use crate::seed::{derive_seed, stream};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    /// 22 training, 6 validation and 3 test locations.
    fn default() -> Self {
        Self {
            train: 22,
            val: 6,
            test: 3,
        }
    }
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    fn split_of(&self, index: usize) -> Split {
        if index < self.train {
            Split::Train
        } else if index < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEntry {
    pub location_id: String,
    pub split: Split,
    /// Seed of the location's frame stack.
    pub seed: u64,
    pub modality: Modality,
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub detector: DetectorParams,
    pub phantom: PhantomSpec,
    pub frames: Vec<String>,
    pub truth: String,
    pub answer: String,
}

impl LocationEntry {
    pub fn frame_path(&self, root: &Path, index: usize) -> PathBuf {
        root.join(&self.frames[index])
    }

    pub fn load_frame(&self, root: &Path, index: usize) -> Result<Image> {
        load_image(self.frame_path(root, index))
    }

    pub fn load_answer(&self, root: &Path) -> Result<Image> {
        load_image(root.join(&self.answer))
    }

    pub fn load_truth(&self, root: &Path) -> Result<Image> {
        load_image(root.join(&self.truth))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub locations: Vec<LocationEntry>,
}

impl Manifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Dataset(format!(
                "manifest version {} is not supported",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LocationEntry> {
        self.locations.iter().filter(move |l| l.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

fn frame_name(index: usize, n_frames: usize) -> String {
    let digits = (n_frames.saturating_sub(1).max(1).ilog10() as usize + 1).max(3);
    format!("frame_{index:0digits$}.tiff")
}

fn write_location(
    root: &Path,
    index: usize,
    spec: &PhantomSpec,
    split: Split,
    n_frames: usize,
    p: &DetectorParams,
) -> Result<LocationEntry> {
    let location_id = format!("loc_{index:03}");
    let dir = root.join(&location_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let truth = render_phantom(spec)?;
    let seed = derive_seed(spec.rng_seed, stream::LOCATION, index as u64);

    let mut acc = MeanAccumulator::new(truth.width(), truth.height());
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let frame = detect_frame(&truth, p, frame_seed(seed, i))?;
        let name = frame_name(i, n_frames);
        save_image(&frame, dir.join(&name), BitDepth::Sixteen)?;
        acc.add(&frame)?;
        frames.push(format!("{location_id}/{name}"));
    }
    let answer = acc.finish()?;
    save_image(&truth, dir.join("truth.tiff"), BitDepth::Sixteen)?;
    save_image(&answer, dir.join("answer.tiff"), BitDepth::Sixteen)?;

    Ok(LocationEntry {
        truth: format!("{location_id}/truth.tiff"),
        answer: format!("{location_id}/answer.tiff"),
        location_id,
        split,
        seed,
        modality: spec.modality,
        width: spec.width,
        height: spec.height,
        n_frames,
        detector: *p,
        phantom: spec.clone(),
        frames,
    })
}

/// Renders each phantom, simulates `n_frames` detector frames, averages them
/// into the answer image and writes everything plus the manifest under
/// `root`. Locations are assigned to splits in order: the first
/// `split.train` are training, the next `split.val` validation, the rest
/// test.
pub fn build_dataset(
    root: impl AsRef<Path>,
    specs: &[PhantomSpec],
    n_frames: usize,
    p: &DetectorParams,
    split: SplitCounts,
) -> Result<Manifest> {
    let root = root.as_ref();
    if split.total() != specs.len() {
        return Err(Error::Dataset(format!(
            "split {}/{}/{} does not add up to {} locations",
            split.train,
            split.val,
            split.test,
            specs.len()
        )));
    }
    if n_frames == 0 {
        return Err(Error::InvalidParameter(
            "n_frames must be at least 1".into(),
        ));
    }
    p.validate()?;
    for s in specs {
        s.validate()?;
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let locations = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            log::debug!("simulating location {i}");
            write_location(root, i, spec, split.split_of(i), n_frames, p)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        locations,
    };
    let path = root.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
