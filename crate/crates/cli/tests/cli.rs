use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpdenoise_core::ddae::DdaeModel;
use mpdenoise_core::image::{load_image, save_image, BitDepth};
use mpdenoise_core::Image;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn mpdenoise(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpdenoise"))
        .arg("-q")
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("MPDENOISE_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout_path(o: &Output) -> PathBuf {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout.clone()).unwrap().trim())
}

fn digest_tree(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, hex::encode(Sha256::digest(fs::read(&p).unwrap()))));
            }
        }
    }
    out.sort();
    out
}

/// A 4-location, 8-frame, 32×32 dataset.
fn smoke_dataset(tmp: &TempDir) -> PathBuf {
    let runs = tmp.path().join("runs");
    stdout_path(&mpdenoise(
        &runs,
        &[
            "simulate",
            "--locations",
            "4",
            "--frames",
            "8",
            "--size",
            "32",
        ],
    ))
}

#[test]
fn simulate_smoke_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = smoke_dataset(&tmp);
    assert!(a.join("manifest.json").is_file());
    assert!(a.join("loc_003/frame_007.tiff").is_file());
    let snapshot = a.parent().unwrap().join("config.json");
    assert!(snapshot.is_file());

    let other = tmp.path().join("again");
    let b = stdout_path(&mpdenoise(
        &other,
        &["--config", snapshot.to_str().unwrap(), "simulate"],
    ));
    assert_eq!(
        a.parent().unwrap().file_name(),
        b.parent().unwrap().file_name()
    );
    assert_eq!(digest_tree(&a), digest_tree(&b));
}

#[test]
fn filter_train_denoise_evaluate() {
    let tmp = TempDir::new().unwrap();
    let data = smoke_dataset(&tmp);
    let runs = tmp.path().join("runs");
    let d = data.to_str().unwrap();

    let filter = stdout_path(&mpdenoise(
        &runs,
        &["--dataset", d, "--set", "filters.median=[3]", "filter"],
    ));
    // 1 test location × 4 frames × (4 gaussian + 1 median)
    let csv = fs::read_to_string(filter.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 5);
    assert!(filter
        .join("outputs/gaussian/3/loc_003/frame_000.tiff")
        .is_file());

    let ckpt = stdout_path(&mpdenoise(
        &runs,
        &[
            "--dataset",
            d,
            "--set",
            "train.patch_size=32",
            "train",
            "--epochs",
            "2",
        ],
    ));
    let model = DdaeModel::load(&ckpt).unwrap();
    let curve = fs::read_to_string(ckpt.parent().unwrap().join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);

    let denoised = stdout_path(&mpdenoise(
        &runs,
        &[
            "--dataset",
            d,
            "denoise",
            "--checkpoint",
            ckpt.to_str().unwrap(),
        ],
    ));
    let out = denoised.join("outputs/ddae/default/loc_003/frame_001.tiff");
    let frame = load_image(data.join("loc_003/frame_001.tiff")).unwrap();
    let direct = model.denoise(&frame).unwrap();
    let stored = load_image(&out).unwrap();
    assert!(direct
        .data()
        .iter()
        .zip(stored.data())
        .all(|(a, b)| (a - b).abs() <= 0.5 / 65535.0 + 1e-7));

    let inputs = [filter.join("outputs"), denoised.join("outputs")];
    let eval = stdout_path(&mpdenoise(
        &runs,
        &[
            "--dataset",
            d,
            "evaluate",
            "--include-answer",
            "--inputs",
            inputs[0].to_str().unwrap(),
            inputs[1].to_str().unwrap(),
        ],
    ));
    let csv = fs::read_to_string(eval.join("report.csv")).unwrap();
    let sanity: Vec<&str> = csv.lines().filter(|l| l.contains(",answer,")).collect();
    assert_eq!(sanity.len(), 4);
    for l in sanity {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!((f[3], f[4], f[10]), ("inf", "1.000000", "1.00000"), "{l}");
    }
    let md = fs::read_to_string(eval.join("report.md")).unwrap();
    for m in ["| noisy |", "| gaussian |", "| median |", "| ddae |"] {
        assert!(md.contains(m), "{m} missing from\n{md}");
    }
    assert!(eval
        .join("overlays/ddae_default/loc_003_frame_000.png")
        .is_file());
}

#[test]
fn single_image_denoise_is_deterministic_and_keeps_odd_dims() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let ckpt = tmp.path().join("m.ddae");
    DdaeModel::build(3).save(&ckpt).unwrap();
    let input = tmp.path().join("odd.tiff");
    let img = Image::from_fn(30, 22, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0).unwrap();
    save_image(&img, &input, BitDepth::Sixteen).unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let args = [
            "denoise",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ];
        assert_eq!(stdout_path(&mpdenoise(&runs, &args)), out);
        fs::read(&out).unwrap()
    };
    let (a, b) = (run("a.tiff"), run("b.tiff"));
    assert_eq!(a, b);
    assert_eq!(
        load_image(tmp.path().join("a.tiff")).unwrap().dims(),
        (30, 22)
    );
}

#[test]
fn gradcheck_passes_and_mutation_fails() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let dir = stdout_path(&mpdenoise(&runs, &["gradcheck", "--model", "linear"]));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("gradcheck.json")).unwrap()).unwrap();
    assert!(json["max_rel_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(json["passed"], true);

    let ok = mpdenoise(&runs, &["gradcheck", "--sample", "6"]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );

    let broken = mpdenoise(&runs, &["gradcheck", "--sample", "6", "--fault-stage", "4"]);
    assert_eq!(broken.status.code(), Some(3));
}

#[test]
fn overlay_writes_png() {
    let tmp = TempDir::new().unwrap();
    let data = smoke_dataset(&tmp);
    let out = tmp.path().join("ov/overlay.png");
    let (image, answer) = (
        data.join("loc_000/frame_000.tiff"),
        data.join("loc_000/answer.tiff"),
    );
    let args = [
        "overlay",
        "--image",
        image.to_str().unwrap(),
        "--answer",
        answer.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ];
    stdout_path(&mpdenoise(&tmp.path().join("runs"), &args));
    assert_eq!(&fs::read(&out).unwrap()[1..4], b"PNG");
}

#[test]
fn error_paths_have_distinct_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let code = |args: &[&str]| mpdenoise(&runs, args).status.code();
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["--set", "dataset.colour=3", "simulate"]), Some(1));
    assert_eq!(code(&["filter"]), Some(1));
    assert_eq!(
        code(&["--dataset", "/nonexistent/dataset", "filter"]),
        Some(2)
    );
    let junk = tmp.path().join("junk.ddae");
    fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(
        code(&[
            "denoise",
            "--checkpoint",
            junk.to_str().unwrap(),
            "--input",
            "x.tiff"
        ]),
        Some(2)
    );
}

#[test]
fn empty_filter_sweep_is_a_noop() {
    let tmp = TempDir::new().unwrap();
    let data = smoke_dataset(&tmp);
    let o = mpdenoise(
        &tmp.path().join("runs"),
        &[
            "--dataset",
            data.to_str().unwrap(),
            "--set",
            "filters.gaussian=[]",
            "--set",
            "filters.median=[]",
            "filter",
        ],
    );
    let dir = stdout_path(&o);
    assert!(!dir.join("outputs").exists());
}

#[test]
fn config_file_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"dataset": {"locations": 3, "frames": 2, "width": 16, "height": 16}}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mpdenoise"))
        .args(["-q", "--out"])
        .arg(tmp.path().join("runs"))
        .arg("simulate")
        .env("MPDENOISE_CONFIG", &cfg)
        .output()
        .unwrap();
    let data = stdout_path(&o);
    let m = mpdenoise_core::noise::Manifest::load(&data).unwrap();
    assert_eq!(
        (
            m.locations.len(),
            m.locations[0].n_frames,
            m.locations[0].width
        ),
        (3, 2, 16)
    );
}
