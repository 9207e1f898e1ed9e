use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpdenoise_cli::config::{GradcheckModel, CONFIG_ENV};
use mpdenoise_cli::pipeline::{self, CHECKPOINT_FILE};
use mpdenoise_cli::{exit, load_config, parse_override, CliError, CliResult, RunConfig};
use mpdenoise_core::ddae::DdaeModel;
use serde_json::Value;

/// Denoising workbench for low-photon multiphoton microscopy.
///
/// Configuration is layered: built-in defaults, then the JSON file given by
/// --config (or $MPDENOISE_CONFIG), then --set overrides and the typed flags.
/// Every run writes into <output_root>/<command>-<config hash>/ together with
/// a config.json snapshot that reproduces it.
#[derive(Parser, Debug)]
#[command(name = "mpdenoise", version)]
struct Cli {
    /// JSON config file layered over the defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Parent directory of run outputs (output_root).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset root (dataset.root).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DatasetFlags {
    #[arg(long)]
    locations: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Side of the square frames.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, value_parser = ["nuclei", "granules"])]
    modality: Option<String>,
    #[arg(long)]
    cells: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a frame-stack dataset.
    Simulate(DatasetFlags),
    /// Apply the configured filter sweep to the test cases.
    Filter,
    /// Train the denoising autoencoder.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Denoise one image, or every test case when no input is given.
    Denoise {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score denoised outputs against the answers.
    Evaluate {
        /// Output directories laid out as <method>/<param>/<location>/<frame>.
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Add a sanity row scoring each answer against itself.
        #[arg(long)]
        include_answer: bool,
        #[arg(long)]
        no_overlays: bool,
    },
    /// simulate → filter → train → denoise → evaluate in one run directory.
    Bench {
        #[command(flatten)]
        dataset: DatasetFlags,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Finite-difference check of the backward passes.
    Gradcheck {
        #[arg(long, value_parser = ["ddae", "linear"])]
        model: Option<String>,
        /// Side of the random input.
        #[arg(long)]
        size: Option<usize>,
        /// Entries sampled per tensor instead of checking all.
        #[arg(long)]
        sample: Option<usize>,
        /// Corrupt this stage's backward pass (the check should then fail).
        #[arg(long)]
        fault_stage: Option<usize>,
        #[arg(long)]
        no_mutations: bool,
    },
    /// Pseudocolor boundary overlay of an image against an answer.
    Overlay {
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        answer: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn path_value(p: &std::path::Path) -> Value {
    Value::from(p.to_string_lossy().into_owned())
}

fn dataset_overrides(f: &DatasetFlags, out: &mut Vec<(String, Value)>) {
    let mut push = |k: &str, v: Value| out.push((k.to_string(), v));
    if let Some(n) = f.locations {
        push("dataset.locations", n.into());
    }
    if let Some(n) = f.frames {
        push("dataset.frames", n.into());
    }
    if let Some(n) = f.size {
        push("dataset.width", n.into());
        push("dataset.height", n.into());
    }
    if let Some(m) = &f.modality {
        push("dataset.modality", m.as_str().into());
    }
    if let Some(n) = f.cells {
        push("dataset.cells", n.into());
    }
}

fn overrides(cli: &Cli) -> CliResult<Vec<(String, Value)>> {
    let mut out = cli
        .sets
        .iter()
        .map(|s| parse_override(s))
        .collect::<CliResult<Vec<_>>>()?;
    let mut push = |k: &str, v: Value| out.push((k.to_string(), v));
    if let Some(p) = &cli.out {
        push("output_root", path_value(p));
    }
    if let Some(s) = cli.seed {
        push("seed", s.into());
    }
    if let Some(p) = &cli.dataset {
        push("dataset.root", path_value(p));
    }
    match &cli.command {
        Command::Simulate(f) => dataset_overrides(f, &mut out),
        Command::Filter => {}
        Command::Train { epochs } => {
            if let Some(e) = epochs {
                push("train.epochs", (*e).into());
            }
        }
        Command::Denoise {
            checkpoint,
            input,
            output,
        } => {
            for (k, v) in [
                ("checkpoint", checkpoint),
                ("input", input),
                ("output", output),
            ] {
                if let Some(p) = v {
                    push(&format!("denoise.{k}"), path_value(p));
                }
            }
        }
        Command::Evaluate {
            inputs,
            include_answer,
            no_overlays,
        } => {
            if !inputs.is_empty() {
                push(
                    "eval.inputs",
                    Value::Array(inputs.iter().map(|p| path_value(p)).collect()),
                );
            }
            if *include_answer {
                push("eval.include_answer", true.into());
            }
            if *no_overlays {
                push("eval.overlays", false.into());
            }
        }
        Command::Bench { dataset, epochs } => {
            if let Some(e) = epochs {
                push("train.epochs", (*e).into());
            }
            dataset_overrides(dataset, &mut out);
        }
        Command::Gradcheck {
            model,
            size,
            sample,
            fault_stage,
            no_mutations,
        } => {
            if let Some(m) = model {
                push("gradcheck.model", m.as_str().into());
            }
            if let Some(s) = size {
                push("gradcheck.size", (*s).into());
            }
            if let Some(s) = sample {
                push("gradcheck.per_tensor", (*s).into());
            }
            if let Some(s) = fault_stage {
                push("gradcheck.fault_stage", (*s).into());
            }
            if *no_mutations {
                push("gradcheck.mutation_sweep", false.into());
            }
        }
        Command::Overlay {
            image,
            answer,
            output,
        } => {
            for (k, v) in [("image", image), ("answer", answer), ("output", output)] {
                if let Some(p) = v {
                    push(&format!("overlay.{k}"), path_value(p));
                }
            }
        }
    }
    Ok(out)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Filter => "filter",
        Command::Train { .. } => "train",
        Command::Denoise { .. } => "denoise",
        Command::Evaluate { .. } => "evaluate",
        Command::Bench { .. } => "bench",
        Command::Gradcheck { .. } => "gradcheck",
        Command::Overlay { .. } => "overlay",
    }
}

fn required(p: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
    p.clone()
        .ok_or_else(|| CliError::Usage(format!("{key} is required")))
}

fn load_model(cfg: &RunConfig) -> CliResult<DdaeModel> {
    Ok(DdaeModel::load(required(
        &cfg.denoise.checkpoint,
        "denoise.checkpoint (--checkpoint)",
    )?)?)
}

/// Runs the command; the returned path is printed on stdout.
fn run(cli: &Cli, cfg: &RunConfig) -> CliResult<PathBuf> {
    let name = command_name(&cli.command);
    let run_dir = cfg.run_dir(name);
    pipeline::create_dir(&run_dir)?;
    cfg.write_snapshot(&run_dir)?;
    log::info!(
        "{name}: config hash {}, outputs in {}",
        cfg.hash(),
        run_dir.display()
    );
    match &cli.command {
        Command::Simulate(_) => {
            let root = cfg
                .dataset
                .root
                .clone()
                .unwrap_or_else(|| run_dir.join("dataset"));
            pipeline::simulate(cfg, &root)?;
            Ok(root)
        }
        Command::Filter => {
            pipeline::filter(cfg, &pipeline::dataset_root(cfg)?, &run_dir)?;
            Ok(run_dir)
        }
        Command::Train { .. } => {
            pipeline::train(cfg, &pipeline::dataset_root(cfg)?, &run_dir)?;
            Ok(run_dir.join(CHECKPOINT_FILE))
        }
        Command::Denoise { .. } => {
            let model = load_model(cfg)?;
            match &cfg.denoise.input {
                Some(input) => {
                    let output = cfg
                        .denoise
                        .output
                        .clone()
                        .unwrap_or_else(|| run_dir.join("denoised.tiff"));
                    pipeline::denoise_image(&model, input, &output)?;
                    Ok(output)
                }
                None => {
                    pipeline::denoise_dataset(
                        cfg,
                        &pipeline::dataset_root(cfg)?,
                        &model,
                        &run_dir,
                    )?;
                    Ok(run_dir)
                }
            }
        }
        Command::Evaluate { .. } => {
            pipeline::evaluate(
                cfg,
                &pipeline::dataset_root(cfg)?,
                &cfg.eval.inputs,
                &run_dir,
            )?;
            Ok(run_dir)
        }
        Command::Bench { .. } => {
            pipeline::bench(cfg, &run_dir)?;
            Ok(run_dir)
        }
        Command::Gradcheck { .. } => {
            let s = pipeline::gradcheck(cfg, &run_dir)?;
            let verdict = if s.passed { "PASS" } else { "FAIL" };
            log::info!(
                "gradcheck {verdict}: max relative error {:.3e} (tolerance {:.1e}) over {} entries, {} kinks skipped",
                s.max_rel_error,
                s.tolerance,
                s.checked,
                s.kinks
            );
            for m in s.mutations.iter().filter(|m| !m.detected) {
                log::error!(
                    "corrupting stage {} went undetected (error {:.3e})",
                    m.stage,
                    m.max_rel_error
                );
            }
            if s.passed {
                Ok(run_dir)
            } else {
                let what = if s.model == GradcheckModel::Ddae {
                    "DDAE"
                } else {
                    "linear model"
                };
                Err(CliError::Numeric(format!(
                    "gradient check of the {what} failed"
                )))
            }
        }
        Command::Overlay { .. } => {
            let o = &cfg.overlay;
            let output = o
                .output
                .clone()
                .unwrap_or_else(|| run_dir.join("overlay.png"));
            let s = pipeline::overlay(
                &required(&o.image, "overlay.image (--image)")?,
                &required(&o.answer, "overlay.answer (--answer)")?,
                &output,
            )?;
            let fmt = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{v:.5}"));
            log::info!(
                "precision {}, recall {}, F1 {}",
                fmt(s.precision),
                fmt(s.recall),
                fmt(s.f1)
            );
            Ok(output)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::SUCCESS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = overrides(&cli)
        .and_then(|o| load_config(cli.config.as_deref(), &o))
        .and_then(|cfg| run(&cli, &cfg));
    match result {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mpdenoise_core::noise::Modality;

    #[test]
    fn flags_become_overrides() {
        let cli = Cli::parse_from([
            "mpdenoise",
            "--seed",
            "3",
            "simulate",
            "--locations",
            "4",
            "--size",
            "32",
        ]);
        let o = overrides(&cli).unwrap();
        let cfg = load_config(None, &o).unwrap();
        assert_eq!(
            (
                cfg.seed,
                cfg.dataset.locations,
                cfg.dataset.width,
                cfg.dataset.height
            ),
            (3, 4, 32, 32)
        );
        assert_eq!(cfg.dataset.modality, Modality::Nuclei);
    }

    #[test]
    fn typed_flags_win_over_set() {
        let cli = Cli::parse_from([
            "mpdenoise",
            "--set",
            "train.epochs=9",
            "train",
            "--epochs",
            "2",
        ]);
        assert_eq!(
            load_config(None, &overrides(&cli).unwrap())
                .unwrap()
                .train
                .epochs,
            2
        );
    }
}
