use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparsecafm::scanio::{downsample, read_scan, write_scan};
use sparsecafm::{Channel, ScanField, SparsityFactor};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparsecafm"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_spec(dir: &Path, grid: usize) -> PathBuf {
    let spec = serde_json::json!({
        "grid_size": grid, "extent_um": 1.0, "nucleation_density": 5.0,
        "coverage_target": 0.7, "defect_density": 3.0, "crack_count": 1,
        "monolayer_height_nm": 0.7, "on_current_nA": 5.0, "off_current_nA": 0.2,
        "noise_sigma": 0.02, "tip_radius_px": 1, "rng_seed": 0
    });
    let path = dir.join("spec.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    path
}

/// Generates `count` 64² samples with ×2 and ×4 sparse copies.
fn dataset(tmp: &TempDir, count: usize) -> PathBuf {
    let spec = write_spec(tmp.path(), 64);
    let data = tmp.path().join("data");
    let n = count.to_string();
    ok(&["generate", "--spec", p(&spec), "--count", &n, "--out", p(&data), "--seed", "3", "--sparse", "2", "--sparse", "4"]);
    data
}

fn quick_train_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--data", data, "--out", out, "--profile", "small", "--epochs", "2",
        "--steps-per-epoch", "2", "--batch-size", "2", "--crop-high", "32", "--checkpoint-every", "1",
    ]
}

fn png_text(path: &Path) -> Vec<(String, String)> {
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path).unwrap()));
    let reader = decoder.read_info().unwrap();
    reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect()
}

#[test]
fn generate_empty_dataset() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("empty");
    ok(&["generate", "--count", "0", "--out", p(&out)]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["count"], 0);
    assert_eq!(manifest["samples"].as_array().unwrap().len(), 0);
    assert_eq!(manifest["spec_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn generate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), 64);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        ok(&["generate", "--spec", p(&spec), "--count", "3", "--out", p(dir), "--seed", seed]);
    }
    let read = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let manifest: serde_json::Value = serde_json::from_slice(&read(&a)).unwrap();
    for sample in manifest["samples"].as_array().unwrap() {
        for key in ["morphology", "current", "mask"] {
            let name = sample[key].as_str().unwrap();
            assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
        }
    }
}

#[test]
fn generate_rejects_invalid_spec() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), 16);
    let out = run(&["generate", "--spec", p(&spec), "--count", "1", "--out", p(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("grid_size"), "{}", stderr(&out));
}

#[test]
fn train_dry_run_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 7, "learning_rate": 0.5}"#).unwrap();
    let out = bin()
        .args(["train", "--dry-run", "--profile", "small", "--config", p(&cfg), "--learning-rate", "0.25"])
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let log = stderr(&out);
    assert!(log.contains("\"epochs\":7"), "{log}");
    assert!(log.contains("\"learning_rate\":0.25"), "{log}");

    std::fs::write(&cfg, r#"{"epochs": 1, "bogus": true}"#).unwrap();
    assert!(!run(&["train", "--dry-run", "--config", p(&cfg)]).status.success());
    assert!(!run(&["train", "--dry-run", "--batch-size", "0"]).status.success());
}

#[test]
fn train_resume_and_finetune() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp, 4);
    let run_a = tmp.path().join("a");
    let run_b = tmp.path().join("b");
    let out_a = run_a.join("model.scck");
    let out_b = run_b.join("model.scck");
    ok(&quick_train_args(p(&data), p(&out_a)));
    ok(&quick_train_args(p(&data), p(&out_b)));
    for name in ["model.scck", "final.scck", "epoch_0001.scck", "train_log.csv"] {
        assert_eq!(std::fs::read(run_a.join(name)).unwrap(), std::fs::read(run_b.join(name)).unwrap(), "{name}");
    }

    // Resuming after epoch 1 replays epoch 2 exactly.
    let run_c = tmp.path().join("c");
    let mut args = quick_train_args(p(&data), "");
    let out_c = run_c.join("model.scck");
    args[4] = p(&out_c);
    let epoch1 = run_a.join("epoch_0001.scck");
    args.extend(["--resume", p(&epoch1)]);
    ok(&args);
    assert_eq!(std::fs::read(run_a.join("final.scck")).unwrap(), std::fs::read(run_c.join("final.scck")).unwrap());

    let tuned = tmp.path().join("tuned.scck");
    ok(&["finetune", "--base", p(&out_a), "--data", p(&data), "--out", p(&tuned), "--profile", "small",
        "--epochs", "1", "--steps-per-epoch", "1", "--batch-size", "1", "--crop-high", "32"]);
    let base = sparsecafm::model::Checkpoint::load(&out_a).unwrap();
    let child = sparsecafm::model::Checkpoint::load(&tuned).unwrap();
    assert_eq!(child.meta.provenance.last(), Some(&base.id()));
    assert!(!run(&["finetune", "--data", p(&data), "--out", p(&tuned)]).status.success());
}

#[test]
fn train_divergence_exits_nonzero() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp, 2);
    let out_path = tmp.path().join("run/model.scck");
    let mut args = quick_train_args(p(&data), p(&out_path));
    args.extend(["--learning-rate", "1e30"]);
    let out = run(&args);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("diverged"), "{}", stderr(&out));
}

#[test]
fn reconstruct_methods_and_dims() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp, 2);
    let ckpt = tmp.path().join("run/model.scck");
    ok(&quick_train_args(p(&data), p(&ckpt)));

    let sparse = data.join("x2");
    let model_dir = tmp.path().join("model");
    ok(&["reconstruct", "--in", p(&sparse), "--method", "model", "--ckpt", p(&ckpt), "--out", p(&model_dir)]);
    for (path, field) in sparse.read_dir().unwrap().map(|e| e.unwrap().path()).map(|q| (q.clone(), read_scan(&q).unwrap())) {
        let rec = read_scan(model_dir.join(path.file_name().unwrap())).unwrap();
        assert_eq!(rec.dims(), (field.height() * 2, field.width() * 2));
        assert_eq!(rec.sample_id(), field.sample_id());
        assert!(!rec.is_normalized());
    }

    let one = sparse.read_dir().unwrap().next().unwrap().unwrap().path();
    for method in ["bicubic", "gpr"] {
        let out = tmp.path().join(format!("{method}.scaf"));
        ok(&["reconstruct", "--in", p(&one), "--method", method, "--sigma", "2", "--out", p(&out)]);
        assert_eq!(read_scan(&out).unwrap().dims(), (64, 64));
    }
    let out = run(&["reconstruct", "--in", p(&one), "--method", "model", "--ckpt", p(&ckpt), "--sigma", "4", "--out", "x.scaf"]);
    assert!(!out.status.success());
    assert!(!run(&["reconstruct", "--in", p(&one), "--method", "bicubic", "--out", "x.scaf"]).status.success());
}

#[test]
fn gpr_full_frame_x8_is_a_resource_error() {
    let tmp = TempDir::new().unwrap();
    let field = ScanField::from_fn(Channel::Current, 512, 512, |y, x| ((x + 2 * y) % 7) as f32).unwrap();
    let sparse = downsample(&field, SparsityFactor::X8).unwrap();
    let input = tmp.path().join("sparse.scaf");
    write_scan(&sparse, &input).unwrap();
    let out = run(&["reconstruct", "--in", p(&input), "--method", "gpr", "--sigma", "8", "--out", p(&tmp.path().join("o.scaf"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("resource limit"), "{}", stderr(&out));
}

#[test]
fn evaluate_identity_and_pairing() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp, 3);
    let csv_path = tmp.path().join("eval.csv");
    ok(&["evaluate", "--pred", p(&data), "--truth", p(&data), "--out", p(&csv_path), "--method", "truth", "--sigma", "2"]);
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["sample_id", "method", "sigma", "channel", "psnr_db", "ssim"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!((&r[1], &r[2], &r[4], &r[5]), ("truth", "2", "inf", "1"));
    }

    let partial = tmp.path().join("partial");
    std::fs::create_dir(&partial).unwrap();
    let first = data.read_dir().unwrap().map(|e| e.unwrap().path()).find(|q| q.extension().is_some_and(|e| e == "scaf")).unwrap();
    std::fs::copy(&first, partial.join(first.file_name().unwrap())).unwrap();
    let other = tmp.path().join("other.csv");
    let out = run(&["evaluate", "--pred", p(&data), "--truth", p(&partial), "--out", p(&other)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("do not pair up"), "{}", stderr(&out));
    assert!(stderr(&out).contains("prediction only"), "{}", stderr(&out));
    assert!(!other.exists());
}

#[test]
fn scorecard_perfect_prediction() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp, 3);
    let json_path = tmp.path().join("card.json");
    ok(&["scorecard", "--pred", p(&data), "--sparse", p(&data.join("x4")), "--truth", p(&data), "--out", p(&json_path)]);
    let card: serde_json::Value = serde_json::from_slice(&std::fs::read(&json_path).unwrap()).unwrap();
    assert_eq!(card["sigma"], 4);
    assert_eq!(card["sample_count"], 3);
    assert_eq!(card["baseline_upsampling"], "nearest");
    for prop in card["properties"].as_array().unwrap() {
        assert_eq!(prop["prediction_rmae"], 0.0);
    }

    let csv_path = tmp.path().join("card.csv");
    ok(&["scorecard", "--pred", p(&data), "--sparse", p(&data.join("x4")), "--truth", p(&data), "--out", p(&csv_path), "--baseline", "bicubic"]);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with("property,prediction_x4,baseline_x4\n"), "{text}");
    assert_eq!(text.lines().count(), 9);

    let out = run(&["scorecard", "--pred", p(&data), "--sparse", p(&data.join("x2")), "--truth", p(&data.join("x4")), "--out", p(&json_path)]);
    assert!(!out.status.success());
}

#[test]
fn plot_panels_and_bars() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp, 1);
    let id = read_scan(data.read_dir().unwrap().map(|e| e.unwrap().path()).find(|q| q.extension().is_some_and(|e| e == "scaf")).unwrap())
        .unwrap()
        .sample_id()
        .to_string();
    let truth = data.join(format!("{id}_current.scaf"));
    let sparse = data.join("x4").join(format!("{id}_current.scaf"));
    let bicubic = tmp.path().join("bicubic.scaf");
    ok(&["reconstruct", "--in", p(&sparse), "--method", "bicubic", "--sigma", "4", "--out", p(&bicubic)]);

    let single = tmp.path().join("single.png");
    ok(&["plot", "--in", p(&truth), "--out", p(&single)]);
    assert!(png_text(&single).contains(&("colormap".to_string(), "viridis".to_string())));

    let panel = tmp.path().join("panel.png");
    ok(&["plot", "--in", p(&sparse), p(&bicubic), p(&truth), "--out", p(&panel)]);
    let reader = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&panel).unwrap())).read_info().unwrap();
    assert_eq!((reader.info().width, reader.info().height), (3 * 64 + 2 * 4, 64));

    let csv_path = tmp.path().join("eval.csv");
    ok(&["evaluate", "--pred", p(&data), "--truth", p(&data), "--out", p(&csv_path)]);
    let bars = tmp.path().join("bars.png");
    ok(&["plot", "--in", p(&csv_path), "--out", p(&bars), "--column", "ssim"]);
    assert!(bars.exists());

    let out = run(&["plot", "--in", p(&tmp.path().join("missing.scaf")), "--out", p(&tmp.path().join("m.png"))]);
    assert!(!out.status.success());
    assert!(!tmp.path().join("m.png").exists());
}

#[test]
fn thread_cap_must_be_positive() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["generate", "--count", "0", "--out", p(&tmp.path().join("d"))])
        .env("SPARSECAFM_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("SPARSECAFM_THREADS"));
    let ok = bin()
        .args(["generate", "--count", "1", "--out", p(&tmp.path().join("e"))])
        .env("SPARSECAFM_THREADS", "1")
        .status()
        .unwrap();
    assert!(ok.success());
}
