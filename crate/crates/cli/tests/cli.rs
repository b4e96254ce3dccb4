use std::path::Path;
use std::process::{Command, Output};

use ctxseg_core::config::ExperimentConfig;
use ctxseg_core::data::io::write_png_gray;
use ctxseg_core::network::Checkpoint;

fn ctxseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxseg"))
        .current_dir(dir)
        .env_remove("CTXSEG_DATA_ROOT")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// A small configuration: 32×32 toy families, few runs and images.
fn small_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::toy();
    cfg.model.resolution = 32;
    cfg.model.features = 8;
    cfg.data.toy.resolution = 32;
    cfg.data.toy_validation.tasks = 2;
    cfg.data.toy_heldout.tasks = 2;
    cfg.data.toy_heldout.per_split = [4, 0, 4];
    cfg.protocol.num_images = 3;
    cfg.protocol.num_simulations = 2;
    cfg.protocol.max_clicks = 3;
    cfg.protocol.max_scribble_steps = 2;
    cfg.sweep.context_sizes = vec![1, 2];
    cfg.sweep.examples_per_task = Some(2);
    let path = dir.join("small.json");
    cfg.save(&path).unwrap();
    path.display().to_string()
}

#[test]
fn zero_step_training_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(ctxseg(dir.path(), &["--config", &cfg, "train", "--out", "run", "--steps", "0"]));
    let ck = Checkpoint::load(&dir.path().join("run/last.ckpt")).unwrap();
    assert_eq!(ck.step, 0);
    assert!(dir.path().join("run/config.json").is_file());
}

#[test]
fn seeded_evaluations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(ctxseg(dir.path(), &["--config", &cfg, "train", "--out", "run", "--steps", "2"]));
    for out in ["a", "b"] {
        let common = ["--config", &cfg, "--seed", "7", "--checkpoint", "run/last.ckpt"];
        ok(ctxseg(dir.path(), &[&common[..], &["eval-sequential", "--out", out, "--mode", "binary-pred", "ground-truth"]].concat()));
        ok(ctxseg(dir.path(), &[&common[..], &["eval-context", "--out", out]].concat()));
        ok(ctxseg(dir.path(), &[&common[..], &["eval-interactive", "--out", out, "--steps", "2"]].concat()));
    }
    for file in ["sequential.csv", "sequential_summary.json", "context_sweep.csv", "interactive_sweep.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between seeded runs");
    }
    let rows = std::fs::read_to_string(dir.path().join("a/sequential.csv")).unwrap();
    // Two protocols, two modes, two runs, three images, plus the header.
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 2 * 3);

    let out = ok(ctxseg(dir.path(), &["export-report", "--input", "a", "--out", "charts"]));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listed.lines().count(), 3);
    let svg = std::fs::read_to_string(dir.path().join("charts/noi_by_example.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("center_clicks / binary_pred"));
}

#[test]
fn training_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for out in ["a", "b"] {
        ok(ctxseg(dir.path(), &["--config", &cfg, "--seed", "3", "train", "--out", out, "--steps", "3"]));
    }
    for file in ["last.ckpt", "metrics.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxseg(dir.path(), &["eval-context", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));
    let out = ctxseg(dir.path(), &["--checkpoint", "missing.ckpt", "eval-context", "--out", "x"]);
    assert!(!out.status.success());
    std::fs::write(dir.path().join("bad.json"), "{\"model\": {\"features\": \"many\"}}").unwrap();
    let out = ctxseg(dir.path(), &["--config", "bad.json", "train", "--out", "x", "--steps", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn simulated_prompts_are_written_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut px = vec![0.0f32; 16 * 16];
    for r in 4..10 {
        for c in 3..12 {
            px[r * 16 + c] = 1.0;
        }
    }
    write_png_gray(&dir.path().join("mask.png"), 16, 16, &px).unwrap();
    ok(ctxseg(dir.path(), &["simulate-prompts", "--mask", "mask.png", "--out", "p.json"]));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    let clicks = v["interactions"]["positive_clicks"].as_array().unwrap();
    assert_eq!(clicks.len(), 1);
    let (r, c) = (clicks[0]["row"].as_u64().unwrap() as usize, clicks[0]["col"].as_u64().unwrap() as usize);
    assert_eq!(px[r * 16 + c], 1.0, "center click lies inside the mask");
    ok(ctxseg(dir.path(), &["--seed", "4", "simulate-prompts", "--mask", "mask.png", "--sampler", "--out", "s1.json"]));
    ok(ctxseg(dir.path(), &["--seed", "4", "simulate-prompts", "--mask", "mask.png", "--sampler", "--out", "s2.json"]));
    assert_eq!(std::fs::read(dir.path().join("s1.json")).unwrap(), std::fs::read(dir.path().join("s2.json")).unwrap());
}
