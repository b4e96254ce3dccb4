//! Subcommand implementations.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ctxseg_core::config::ExperimentConfig;
use ctxseg_core::data::io::read_png_gray;
use ctxseg_core::evaluation::report::{summarize_sequential, summarize_sweep, write_sweep_csv, write_traces_csv, SequentialSummary, SweepCell};
use ctxseg_core::evaluation::{run_incontext_sweep, run_interactive_incontext, run_sequential_many, ContextLabelMode, ProtocolConfig};
use ctxseg_core::interaction::{correction_prompts, initial_prompts, protocol_correction, protocol_initial, Protocol};
use ctxseg_core::network::{Checkpoint, Model};
use ctxseg_core::training::{train, TrainSetup};
use ctxseg_core::{encode_interactions, SegMask, DEFAULT_CLICK_RADIUS};

use crate::service::wire::{Interactions, Raster};

pub fn load_model(checkpoint: Option<&Path>) -> Result<(Model, PathBuf)> {
    let path = checkpoint.context("--checkpoint is required for this command")?;
    if !path.is_file() {
        bail!("checkpoint {} does not exist", path.display());
    }
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok((Model::new(ck.params)?, path.to_path_buf()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn run_train(cfg: &ExperimentConfig, out: &Path, resume: Option<&Path>) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let data = cfg.load_data()?;
    let source = data.source();
    let setup = TrainSetup {
        model: cfg.model.clone(),
        train: cfg.training.clone(),
        augmentation: cfg.augmentation.clone(),
        synth: cfg.synth.clone(),
        prompts: cfg.prompts.clone(),
        source: source.as_ref(),
        validation: &data.validation,
        out_dir: Some(out.to_path_buf()),
    };
    let resume = match resume {
        Some(p) => Some(Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let outcome = train(&setup, resume, &mut |row| {
        if let Some(v) = row.val_dice {
            tracing::info!(step = row.step, loss = row.loss_total, val_dice = v, "validation");
        } else if row.step % 50 == 0 {
            tracing::info!(step = row.step, loss = row.loss_total, "train");
        }
    })?;
    tracing::info!(best_val_dice = ?outcome.best_val_dice, "finished");
    Ok(())
}

#[derive(Serialize)]
struct SequentialGroup {
    protocol: Protocol,
    context_label_mode: ContextLabelMode,
    #[serde(flatten)]
    summary: SequentialSummary,
}

pub fn run_eval_sequential(cfg: &ExperimentConfig, model: &Model, protocols: &[Protocol], modes: &[ContextLabelMode], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let data = cfg.load_data()?;
    let mut all = Vec::new();
    let mut groups = Vec::new();
    for &protocol in protocols {
        for &mode in modes {
            let pc = ProtocolConfig {
                protocol,
                context_label_mode: mode,
                ..cfg.protocol.clone()
            };
            let traces = run_sequential_many(model, &data.evaluation, &pc)?;
            groups.push(SequentialGroup {
                protocol,
                context_label_mode: mode,
                summary: summarize_sequential(&traces, pc.seed),
            });
            all.extend(traces);
        }
    }
    write_traces_csv(BufWriter::new(File::create(out.join("sequential.csv"))?), &all)?;
    write_json(&out.join("sequential_summary.json"), &groups)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary {
    protocol: Option<Protocol>,
    cells: Vec<SweepCell>,
}

pub fn run_eval_context(cfg: &ExperimentConfig, model: &Model, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let data = cfg.load_data()?;
    let rows = run_incontext_sweep(model, &data.evaluation, &cfg.sweep)?;
    write_sweep_csv(BufWriter::new(File::create(out.join("context_sweep.csv"))?), &rows)?;
    let summary = SweepSummary {
        protocol: None,
        cells: summarize_sweep(&rows, cfg.sweep.seed),
    };
    write_json(&out.join("context_summary.json"), &summary)?;
    Ok(())
}

pub fn run_eval_interactive(cfg: &ExperimentConfig, model: &Model, protocol: Protocol, steps: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let data = cfg.load_data()?;
    let rows = run_interactive_incontext(model, &data.evaluation, &cfg.sweep, protocol, steps)?;
    write_sweep_csv(BufWriter::new(File::create(out.join("interactive_sweep.csv"))?), &rows)?;
    let summary = SweepSummary {
        protocol: Some(protocol),
        cells: summarize_sweep(&rows, cfg.sweep.seed),
    };
    write_json(&out.join("interactive_summary.json"), &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulatedPrompts {
    height: usize,
    width: usize,
    interactions: Interactions,
    /// Encoded channels in network order: box, positive, negative.
    encoded: [Raster; 3],
}

fn read_mask(path: &Path) -> Result<SegMask> {
    let grid = read_png_gray(path).with_context(|| path.display().to_string())?;
    let [h, w] = grid.dims[..] else { bail!("{} is not a 2D image", path.display()) };
    let hard = grid.data.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
    Ok(SegMask::hard(h, w, hard)?)
}

/// Simulates prompts for a ground-truth mask: the evaluation protocol by
/// default, or the randomized training sampler with `sampler`.
pub fn run_simulate_prompts(
    cfg: &ExperimentConfig,
    mask: &Path,
    prediction: Option<&Path>,
    protocol: Protocol,
    sampler: bool,
    out: &Path,
) -> Result<()> {
    let truth = read_mask(mask)?;
    let previous = prediction.map(read_mask).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.prompts.seed);
    let state = match (&previous, sampler) {
        (None, false) => protocol_initial(&truth, protocol)?,
        (Some(p), false) => protocol_correction(&truth, p, protocol)?,
        (None, true) => initial_prompts(&truth, &cfg.prompts, &mut rng)?,
        (Some(p), true) => correction_prompts(&truth, p, &cfg.prompts, &mut rng)?,
    };
    let enc = encode_interactions(&state, DEFAULT_CLICK_RADIUS)?;
    let (height, width) = truth.shape();
    let report = SimulatedPrompts {
        height,
        width,
        interactions: Interactions::from_state(&state),
        encoded: [0, 1, 2].map(|c| Raster::from_f32(enc.channel(c))),
    };
    write_json(out, &report)
}
