//! Layered run configuration: built-in defaults, then an optional JSON file,
//! then `dotted.path=value` overrides from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use mpdenoise_core::ddae::TrainConfig;
use mpdenoise_core::filters::{median_size_for_sigma, FilterParams};
use mpdenoise_core::noise::{DetectorParams, Modality, PhantomSpec, SplitCounts};
use mpdenoise_core::seed::derive_seed;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError, CliResult};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "MPDENOISE_CONFIG";
/// File name of the effective-config snapshot written into every run dir.
pub const SNAPSHOT_FILE: &str = "config.json";

const PHANTOM_STREAM: u64 = 0x7068_616e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the phantom layouts; detector noise seeds derive from it.
    pub seed: u64,
    /// Parent of the per-run output directories. Not part of the config hash.
    pub output_root: PathBuf,
    pub dataset: DatasetConfig,
    pub filters: FilterSweep,
    pub train: TrainConfig,
    pub denoise: DenoiseConfig,
    pub eval: EvalConfig,
    pub gradcheck: GradcheckConfig,
    pub overlay: OverlayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_root: PathBuf::from("runs"),
            dataset: DatasetConfig::default(),
            filters: FilterSweep::default(),
            train: TrainConfig::default(),
            denoise: DenoiseConfig::default(),
            eval: EvalConfig::default(),
            gradcheck: GradcheckConfig::default(),
            overlay: OverlayConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Existing dataset for `filter`, `train`, `denoise` and `evaluate`;
    /// where `simulate` writes when set.
    pub root: Option<PathBuf>,
    pub locations: usize,
    /// Defaults to the 22/6/3 proportions scaled to `locations`.
    pub split: Option<SplitCounts>,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub modality: Modality,
    pub cells: usize,
    pub detector: DetectorParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            root: None,
            locations: 31,
            split: None,
            frames: 200,
            width: 256,
            height: 256,
            modality: Modality::Nuclei,
            cells: 6,
            detector: DetectorParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn split_counts(&self) -> SplitCounts {
        self.split
            .unwrap_or_else(|| proportional_split(self.locations))
    }

    pub fn phantom_specs(&self, seed: u64) -> Vec<PhantomSpec> {
        (0..self.locations)
            .map(|i| {
                let s = derive_seed(seed, PHANTOM_STREAM, i as u64);
                match self.modality {
                    Modality::Nuclei => PhantomSpec::nuclei(self.width, self.height, self.cells, s),
                    Modality::Granules => {
                        PhantomSpec::granules(self.width, self.height, self.cells, s)
                    }
                }
            })
            .collect()
    }
}

/// 22/6/3 out of 31, scaled; validation and test get at least one location
/// once there are enough to go around.
pub fn proportional_split(n: usize) -> SplitCounts {
    match n {
        0 | 1 => SplitCounts {
            train: n,
            val: 0,
            test: 0,
        },
        2 => SplitCounts {
            train: 1,
            val: 1,
            test: 0,
        },
        _ => {
            let scaled = |k: usize| ((n * k) as f64 / 31.0).round().max(1.0) as usize;
            let (val, test) = (scaled(6), scaled(3));
            SplitCounts {
                train: n - val - test,
                val,
                test,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlmEntry {
    pub h: f64,
    pub patch_radius: usize,
    pub search_radius: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSweep {
    pub gaussian: Vec<f64>,
    /// Sweep values; even values are widened to the next odd window.
    pub median: Vec<usize>,
    pub nlm: Vec<NlmEntry>,
}

impl Default for FilterSweep {
    fn default() -> Self {
        Self {
            gaussian: vec![1.0, 3.0, 5.0, 10.0],
            median: vec![1, 3, 5, 10],
            nlm: Vec::new(),
        }
    }
}

impl FilterSweep {
    pub fn variants(&self) -> Vec<FilterParams> {
        let mut out: Vec<FilterParams> = self
            .gaussian
            .iter()
            .map(|&sigma| FilterParams::Gaussian { sigma })
            .collect();
        for &m in &self.median {
            let p = FilterParams::Median {
                size: median_size_for_sigma(m),
            };
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out.extend(self.nlm.iter().map(|n| FilterParams::Nlm {
            h: n.h,
            patch_radius: n.patch_radius,
            search_radius: n.search_radius,
        }));
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub checkpoint: Option<PathBuf>,
    /// Single image to denoise; without it every test case of the dataset
    /// is denoised.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Leading frames of each test location used as test cases.
    pub frames_per_location: usize,
    /// Directories laid out as `<method>/<param>/<location>/<frame>.tiff`.
    pub inputs: Vec<PathBuf>,
    /// Score the raw noisy frames as a reference method.
    pub include_noisy: bool,
    /// Score the answer against itself as a sanity row.
    pub include_answer: bool,
    pub overlays: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            frames_per_location: 4,
            inputs: Vec::new(),
            include_noisy: true,
            include_answer: false,
            overlays: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradcheckModel {
    Ddae,
    /// A single linear 3×3 convolution.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub model: GradcheckModel,
    /// Side of the square random input.
    pub size: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Entries sampled per tensor; `None` checks every entry.
    pub per_tensor: Option<usize>,
    /// Corrupt this stage's backward pass; the check is then expected to fail.
    pub fault_stage: Option<usize>,
    /// Also confirm that corrupting each stage in turn is detected.
    pub mutation_sweep: bool,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            model: GradcheckModel::Ddae,
            size: 8,
            epsilon: 1e-4,
            tolerance: 1e-3,
            per_tensor: None,
            fault_stage: None,
            mutation_sweep: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlayConfig {
    pub image: Option<PathBuf>,
    pub answer: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        let d = &self.dataset;
        if d.locations == 0 || d.frames == 0 {
            return bad("dataset.locations and dataset.frames must be positive".into());
        }
        let split = d.split_counts();
        if split.total() != d.locations {
            return bad(format!(
                "dataset.split {}/{}/{} does not add up to {} locations",
                split.train, split.val, split.test, d.locations
            ));
        }
        d.detector.validate()?;
        if let Some(spec) = d.phantom_specs(self.seed).first() {
            spec.validate()?;
        }
        for f in self.filters.variants() {
            f.validate()?;
        }
        self.train.validate()?;
        if self.eval.frames_per_location == 0 {
            return bad("eval.frames_per_location must be positive".into());
        }
        let g = &self.gradcheck;
        if g.size < 4
            || !g.size.is_multiple_of(4)
            || g.epsilon.is_nan()
            || g.epsilon <= 0.0
            || g.tolerance.is_nan()
            || g.tolerance <= 0.0
        {
            return bad("gradcheck needs a size that is a positive multiple of 4 and positive epsilon/tolerance".into());
        }
        Ok(())
    }

    /// Hex digest identifying the computation: the SHA-256 of the canonical
    /// JSON of everything except `output_root`, truncated to 12 digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_root = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))[..12].to_string()
    }

    pub fn run_dir(&self, command: &str) -> PathBuf {
        self.output_root.join(format!("{command}-{}", self.hash()))
    }

    pub fn write_snapshot(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(SNAPSHOT_FILE);
        let text = serde_json::to_string_pretty(self).expect("config serializes") + "\n";
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }
}

/// Parses `key=value`; the value is JSON if it parses as JSON, otherwise a
/// plain string.
pub fn parse_override(s: &str) -> CliResult<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{s}` is not of the form key=value")))?;
    if k.is_empty() || k.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("bad override key `{k}`")));
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, l) => *b = l,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut cur = root;
    for part in key.split('.') {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        cur = cur
            .as_object_mut()
            .expect("object")
            .entry(part)
            .or_insert(Value::Null);
    }
    *cur = value;
}

/// Defaults ← `file` ← `overrides`, in that order.
pub fn load_config(file: Option<&Path>, overrides: &[(String, Value)]) -> CliResult<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default()).expect("config serializes");
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let layer: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
        if !layer.is_object() {
            return Err(CliError::Usage(format!(
                "config file {} is not a JSON object",
                path.display()
            )));
        }
        merge(&mut value, layer);
    }
    for (k, v) in overrides {
        set_path(&mut value, k, v.clone());
    }
    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
