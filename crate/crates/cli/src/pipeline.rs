//! Subcommand bodies. Each takes explicit input and output locations so
//! that `bench` can chain them inside one run directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use mpdenoise_core::ddae::{self, DdaeModel, TrainOutcome};
use mpdenoise_core::image::{
    load_image, overlay as overlay_masks, save_image, save_rgb_png, BitDepth,
};
use mpdenoise_core::metrics::{
    aggregate_report, boundary_masks, boundary_scores, psnr, ssim, BoundaryScores, CaseRow,
    EvalReport,
};
use mpdenoise_core::nn::{
    grad_check_with_fault, Activation, ConvLayer, EntrySelection, FaultTarget, GradCheckConfig,
    GradFault, Network, Stage, Tensor4,
};
use mpdenoise_core::noise::{build_dataset, LocationEntry, Manifest, Split, MANIFEST_FILE};
use mpdenoise_core::seed::rng_from_seed;
use mpdenoise_core::Image;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{GradcheckModel, RunConfig};
use crate::error::{io_error, CliError, CliResult};

/// Parameter label of methods without parameters.
pub const NO_PARAM: &str = "default";
pub const OUTPUTS_DIR: &str = "outputs";
pub const CHECKPOINT_FILE: &str = "model.ddae";

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("serializable") + "\n"),
    )
}

pub fn simulate(cfg: &RunConfig, root: &Path) -> CliResult<Manifest> {
    let d = &cfg.dataset;
    let specs = d.phantom_specs(cfg.seed);
    let m = build_dataset(root, &specs, d.frames, &d.detector, d.split_counts())?;
    log::info!(
        "simulated {} locations ({} train / {} val / {} test), {} frames of {}x{} each, in {}",
        m.locations.len(),
        m.count(Split::Train),
        m.count(Split::Val),
        m.count(Split::Test),
        d.frames,
        d.width,
        d.height,
        root.display()
    );
    Ok(m)
}

/// The configured dataset root, which must hold a manifest.
pub fn dataset_root(cfg: &RunConfig) -> CliResult<PathBuf> {
    let root = cfg.dataset.root.clone().ok_or_else(|| {
        CliError::Usage("no dataset given (set dataset.root or pass --dataset)".into())
    })?;
    if !root.join(MANIFEST_FILE).is_file() {
        return Err(CliError::Data(format!(
            "no dataset manifest under {}",
            root.display()
        )));
    }
    Ok(root)
}

struct Case<'a> {
    location: &'a LocationEntry,
    frame: usize,
}

impl Case<'_> {
    fn file_name(&self) -> String {
        Path::new(&self.location.frames[self.frame])
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    fn id(&self) -> String {
        let name = self.file_name();
        let stem = name.rsplit_once('.').map_or(name.as_str(), |(s, _)| s);
        format!("{}/{stem}", self.location.location_id)
    }
}

fn test_cases<'a>(m: &'a Manifest, cfg: &RunConfig) -> CliResult<Vec<Case<'a>>> {
    let cases: Vec<Case> = m
        .split(Split::Test)
        .flat_map(|l| {
            (0..cfg.eval.frames_per_location.min(l.n_frames))
                .map(move |frame| Case { location: l, frame })
        })
        .collect();
    if cases.is_empty() {
        return Err(CliError::Data("the dataset has no test locations".into()));
    }
    Ok(cases)
}

fn output_path(dir: &Path, method: &str, param: &str, case: &Case) -> PathBuf {
    dir.join(method)
        .join(param)
        .join(&case.location.location_id)
        .join(case.file_name())
}

fn save_output(img: &Image, path: &Path) -> CliResult<()> {
    create_dir(path.parent().expect("output paths have parents"))?;
    Ok(save_image(img, path, BitDepth::Sixteen)?)
}

fn score(
    case_id: String,
    method: &str,
    param: &str,
    output: &Image,
    answer: &Image,
) -> CliResult<CaseRow> {
    Ok(CaseRow {
        case_id,
        method: method.to_string(),
        param: param.to_string(),
        psnr: psnr(output, answer)?,
        ssim: ssim(output, answer)?,
        boundary: boundary_scores(output, answer)?,
    })
}

/// Applies every configured filter to every test case, writes the outputs
/// under `out/outputs` and their scores to `out/report.csv`.
pub fn filter(cfg: &RunConfig, root: &Path, out: &Path) -> CliResult<Vec<CaseRow>> {
    let variants = cfg.filters.variants();
    if variants.is_empty() {
        log::warn!("no filters configured; nothing to do");
        return Ok(Vec::new());
    }
    let manifest = Manifest::load(root)?;
    let cases = test_cases(&manifest, cfg)?;
    let outputs = out.join(OUTPUTS_DIR);
    let rows: Vec<Vec<CaseRow>> = cases
        .par_iter()
        .map(|case| {
            let frame = case.location.load_frame(root, case.frame)?;
            let answer = case.location.load_answer(root)?;
            variants
                .iter()
                .map(|f| {
                    let img = f.apply(&frame)?;
                    let param = f.param_label();
                    save_output(&img, &output_path(&outputs, f.method(), &param, case))?;
                    score(case.id(), f.method(), &param, &img, &answer)
                })
                .collect::<CliResult<Vec<_>>>()
        })
        .collect::<CliResult<_>>()?;
    // group by variant, then by case
    let mut flat = Vec::with_capacity(rows.len() * variants.len());
    for v in 0..variants.len() {
        flat.extend(rows.iter().map(|r| r[v].clone()));
    }
    let report = aggregate_report(flat.clone())?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    log::info!(
        "filtered {} test cases with {} variants",
        cases.len(),
        variants.len()
    );
    Ok(flat)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    best_epoch: usize,
    best_val_loss: f64,
    initial_val_loss: f64,
    epochs: usize,
}

/// Trains the DDAE and writes the checkpoint, loss curve and a summary.
pub fn train(cfg: &RunConfig, root: &Path, out: &Path) -> CliResult<TrainOutcome> {
    let manifest = Manifest::load(root)?;
    let outcome = ddae::train(root, &manifest, &cfg.train)?;
    outcome.model.save(out.join(CHECKPOINT_FILE))?;
    outcome.curve.write_csv(out.join("loss_curve.csv"))?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.curve.val[outcome.best_epoch - 1],
        initial_val_loss: outcome.curve.initial_val,
        epochs: outcome.curve.val.len(),
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    log::info!(
        "best validation loss {:.6} at epoch {} (initial {:.6})",
        summary.best_val_loss,
        summary.best_epoch,
        summary.initial_val_loss
    );
    Ok(outcome)
}

/// Denoises every test case with the model into `out/outputs/ddae/default`.
pub fn denoise_dataset(
    cfg: &RunConfig,
    root: &Path,
    model: &DdaeModel,
    out: &Path,
) -> CliResult<usize> {
    let manifest = Manifest::load(root)?;
    let cases = test_cases(&manifest, cfg)?;
    let outputs = out.join(OUTPUTS_DIR);
    cases
        .par_iter()
        .map(|case| {
            let img = model.denoise(&case.location.load_frame(root, case.frame)?)?;
            save_output(&img, &output_path(&outputs, "ddae", NO_PARAM, case))
        })
        .collect::<CliResult<()>>()?;
    log::info!("denoised {} test cases", cases.len());
    Ok(cases.len())
}

pub fn denoise_image(model: &DdaeModel, input: &Path, output: &Path) -> CliResult<()> {
    let img = model.denoise(&load_image(input)?)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(save_image(&img, output, BitDepth::Sixteen)?)
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> CliResult<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() == want_dirs)
        .collect();
    // numeric labels in numeric order, everything else lexicographic
    let key = |p: &PathBuf| {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        (name.parse::<f64>().map_or((1, 0.0), |v| (0, v)), name)
    };
    out.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0 .0
            .cmp(&kb.0 .0)
            .then(ka.0 .1.total_cmp(&kb.0 .1))
            .then(ka.1.cmp(&kb.1))
    });
    Ok(out)
}

fn name_of(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

struct EvalJob {
    method: String,
    param: String,
    location: String,
    case_id: String,
    output: PathBuf,
}

/// A method scored on images held in memory rather than read from disk.
fn reference_job(method: &str, case: &Case) -> EvalJob {
    EvalJob {
        method: method.into(),
        param: NO_PARAM.into(),
        location: case.location.location_id.clone(),
        case_id: case.id(),
        output: PathBuf::new(),
    }
}

fn collect_jobs(input: &Path) -> CliResult<Vec<EvalJob>> {
    let mut jobs = Vec::new();
    for method in sorted_entries(input, true)? {
        for param in sorted_entries(&method, true)? {
            for loc in sorted_entries(&param, true)? {
                for file in sorted_entries(&loc, false)? {
                    let stem = file
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    jobs.push(EvalJob {
                        method: name_of(&method),
                        param: name_of(&param),
                        location: name_of(&loc),
                        case_id: format!("{}/{stem}", name_of(&loc)),
                        output: file,
                    });
                }
            }
        }
    }
    Ok(jobs)
}

/// Scores every output found under `inputs` against its location's answer
/// and writes `report.csv`, `report.md`, `summary.json` and, if enabled,
/// pseudocolor overlays.
pub fn evaluate(
    cfg: &RunConfig,
    root: &Path,
    inputs: &[PathBuf],
    out: &Path,
) -> CliResult<EvalReport> {
    let manifest = Manifest::load(root)?;
    let cases = test_cases(&manifest, cfg)?;
    let mut jobs: Vec<(EvalJob, Option<Image>)> = Vec::new();
    if cfg.eval.include_noisy {
        for case in &cases {
            jobs.push((
                reference_job("noisy", case),
                Some(case.location.load_frame(root, case.frame)?),
            ));
        }
    }
    if cfg.eval.include_answer {
        for case in &cases {
            jobs.push((
                reference_job("answer", case),
                Some(case.location.load_answer(root)?),
            ));
        }
    }
    for input in inputs {
        if !input.is_dir() {
            return Err(CliError::Data(format!(
                "evaluation input {} is not a directory",
                input.display()
            )));
        }
        jobs.extend(collect_jobs(input)?.into_iter().map(|j| (j, None)));
    }
    if jobs.is_empty() {
        return Err(CliError::Data("nothing to evaluate".into()));
    }

    let locations: HashMap<&str, &LocationEntry> = manifest
        .locations
        .iter()
        .map(|l| (l.location_id.as_str(), l))
        .collect();
    let mut answers: HashMap<String, Image> = HashMap::new();
    for (job, _) in &jobs {
        if !answers.contains_key(&job.location) {
            let loc = locations.get(job.location.as_str()).ok_or_else(|| {
                CliError::Data(format!("{} is not a location of the dataset", job.location))
            })?;
            answers.insert(job.location.clone(), loc.load_answer(root)?);
        }
    }

    let overlay_dir = out.join("overlays");
    let rows = jobs
        .par_iter()
        .map(|(job, preloaded)| {
            let img = match preloaded {
                Some(img) => img.clone(),
                None => load_image(&job.output)?,
            };
            let answer = &answers[&job.location];
            let row = score(job.case_id.clone(), &job.method, &job.param, &img, answer)?;
            if cfg.eval.overlays {
                let (mo, ma) = boundary_masks(&img, answer)?;
                let dir = overlay_dir.join(format!("{}_{}", job.method, job.param));
                create_dir(&dir)?;
                let file = dir.join(format!("{}.png", job.case_id.replace('/', "_")));
                save_rgb_png(&overlay_masks(&mo, &ma)?, file)?;
            }
            Ok(row)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = aggregate_report(rows)?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    write_text(
        &out.join("report.md"),
        &report.to_markdown("Denoising benchmark"),
    )?;
    write_json(&out.join("summary.json"), &report.summaries)?;
    for s in report.summaries.iter().filter(|s| s.optimal) {
        log::info!(
            "{:>9} {:>8}: PSNR {:.3} dB, SSIM {:.4}, F1 {}",
            s.method,
            s.param,
            s.mean_psnr,
            s.mean_ssim,
            s.mean_f1.map_or("undefined".into(), |f| format!("{f:.4}"))
        );
    }
    Ok(report)
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub report: EvalReport,
    pub best_epoch: usize,
}

/// simulate → filter → train → denoise → evaluate, inside `run_dir`.
/// `dataset.root` and `eval.inputs` are ignored: the bench always works on
/// its own fresh dataset and its own outputs.
pub fn bench(cfg: &RunConfig, run_dir: &Path) -> CliResult<BenchOutcome> {
    let data = run_dir.join("dataset");
    let dirs = ["filter", "train", "denoise", "evaluate"].map(|d| run_dir.join(d));
    for d in &dirs {
        create_dir(d)?;
    }
    let [filter_dir, train_dir, denoise_dir, eval_dir] = dirs;
    log::info!("bench: simulating");
    simulate(cfg, &data)?;
    log::info!("bench: filtering");
    filter(cfg, &data, &filter_dir)?;
    log::info!("bench: training");
    let outcome = train(cfg, &data, &train_dir)?;
    log::info!("bench: denoising");
    let model = DdaeModel::load(train_dir.join(CHECKPOINT_FILE))?;
    denoise_dataset(cfg, &data, &model, &denoise_dir)?;
    log::info!("bench: evaluating");
    let inputs = [filter_dir.join(OUTPUTS_DIR), denoise_dir.join(OUTPUTS_DIR)];
    let report = evaluate(cfg, &data, &inputs, &eval_dir)?;
    Ok(BenchOutcome {
        report,
        best_epoch: outcome.best_epoch,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorSummary {
    pub name: String,
    pub checked: usize,
    pub kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MutationSummary {
    pub stage: usize,
    pub max_rel_error: f64,
    pub detected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckSummary {
    pub model: GradcheckModel,
    pub size: usize,
    pub fault_stage: Option<usize>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub kinks: usize,
    pub tensors: Vec<TensorSummary>,
    pub mutations: Vec<MutationSummary>,
    pub passed: bool,
}

/// Error above which a deliberately corrupted backward pass counts as caught.
pub const MUTATION_DETECTION: f64 = 0.1;

fn random_tensor(size: usize, rng: &mut impl Rng) -> Tensor4<f64> {
    Tensor4::new(
        [1, 1, size, size],
        (0..size * size).map(|_| rng.random::<f64>()).collect(),
    )
    .expect("dims match")
}

fn fault_for(net: &Network<f64>, stage: usize) -> CliResult<GradFault> {
    let target = match net.stages().get(stage) {
        Some(Stage::Conv(_)) => FaultTarget::Bias,
        Some(_) => FaultTarget::Input,
        None => {
            return Err(CliError::Usage(format!(
                "fault stage {stage} out of range (the network has {} stages)",
                net.stages().len()
            )))
        }
    };
    Ok(GradFault {
        stage,
        target,
        factor: 2.0,
    })
}

/// Finite-difference gradient check; writes `out/gradcheck.json`. A failed
/// check is reported through `passed`, not as an error.
pub fn gradcheck(cfg: &RunConfig, out: &Path) -> CliResult<GradcheckSummary> {
    let g = &cfg.gradcheck;
    let mut rng = rng_from_seed(g.seed);
    let net: Network<f64> = match g.model {
        GradcheckModel::Ddae => DdaeModel::build(g.seed).network().cast(),
        GradcheckModel::Linear => Network::new(vec![Stage::Conv(ConvLayer::glorot(
            1,
            1,
            Activation::None,
            &mut rng,
        ))])?,
    };
    let x = random_tensor(g.size, &mut rng);
    let t = random_tensor(g.size, &mut rng);
    let check_cfg = GradCheckConfig {
        epsilon: g.epsilon,
        selection: g
            .per_tensor
            .map_or(EntrySelection::All, |per_tensor| EntrySelection::Sample {
                per_tensor,
                seed: g.seed,
            }),
        ..Default::default()
    };
    let fault = g.fault_stage.map(|s| fault_for(&net, s)).transpose()?;
    let report = grad_check_with_fault(&net, &x, &t, &check_cfg, fault)?;
    let mut passed = report.max_rel_error < g.tolerance;

    let mut mutations = Vec::new();
    if g.mutation_sweep && g.fault_stage.is_none() {
        let sweep_cfg = GradCheckConfig {
            selection: EntrySelection::Sample {
                per_tensor: 16,
                seed: g.seed,
            },
            ..check_cfg
        };
        for stage in 0..net.stages().len() {
            let r = grad_check_with_fault(&net, &x, &t, &sweep_cfg, Some(fault_for(&net, stage)?))?;
            let detected = r.max_rel_error > MUTATION_DETECTION;
            passed &= detected;
            mutations.push(MutationSummary {
                stage,
                max_rel_error: r.max_rel_error,
                detected,
            });
        }
    }
    let summary = GradcheckSummary {
        model: g.model,
        size: g.size,
        fault_stage: g.fault_stage,
        max_rel_error: report.max_rel_error,
        tolerance: g.tolerance,
        checked: report.checked,
        kinks: report.kinks,
        tensors: report
            .tensors
            .iter()
            .map(|t| TensorSummary {
                name: t.name.clone(),
                checked: t.checked,
                kinks: t.kinks,
                max_rel_error: t.max_rel_error,
            })
            .collect(),
        mutations,
        passed,
    };
    write_json(&out.join("gradcheck.json"), &summary)?;
    Ok(summary)
}

/// Writes the pseudocolor overlay of `image` against `answer`.
pub fn overlay(image: &Path, answer: &Path, output: &Path) -> CliResult<BoundaryScores> {
    let (img, ans) = (load_image(image)?, load_image(answer)?);
    let (mo, ma) = boundary_masks(&img, &ans)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_rgb_png(&overlay_masks(&mo, &ma)?, output)?;
    Ok(boundary_scores(&img, &ans)?)
}
