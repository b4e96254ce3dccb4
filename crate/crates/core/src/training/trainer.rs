//! The outer training loop: sampling, augmentation, updates, validation and
//! checkpointing.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::step::{train_step, TrainExample};
use super::{sample_context_size, TrainConfig};
use crate::data::toy::mix_seed;
use crate::data::{Task, TaskSource};
use crate::error::{Error, Result};
use crate::evaluation::{mean_dice, run_incontext_sweep, SweepConfig};
use crate::interaction::PromptSampleConfig;
use crate::network::{Checkpoint, Model, ModelConfig, ModelParams, Network, OptimizerState};
use crate::synthetic::{apply_pipeline, apply_sampled, maybe_substitute_synthetic, sample_pipeline, AugmentationSpec, SynthConfig};
use crate::types::ContextSet;

/// Attempts at drawing a sample whose augmented target label is nonempty.
const SAMPLE_RETRIES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub loss_total: f64,
    pub loss_dice: f64,
    pub loss_focal: f64,
    pub val_dice: Option<f64>,
}

pub struct TrainSetup<'a> {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augmentation: AugmentationSpec,
    pub synth: SynthConfig,
    pub prompts: PromptSampleConfig,
    pub source: &'a dyn TaskSource,
    /// Tasks scored on their validation split for model selection.
    pub validation: &'a [Task],
    /// Where `last.ckpt`, `best.ckpt` and `metrics.csv` are written.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    pub best: Option<Checkpoint>,
    pub best_val_dice: Option<f64>,
    pub log: Vec<MetricsRow>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct Meta {
    best_val_dice: Option<f64>,
    best_step: Option<u64>,
}

/// Draws one augmented training example for `step`.
pub fn draw_example(setup: &TrainSetup<'_>, rng: &mut ChaCha8Rng) -> Result<TrainExample> {
    let cfg = &setup.train;
    for _ in 0..SAMPLE_RETRIES {
        let m = sample_context_size(rng, cfg.max_context);
        let batch = setup.source.sample(m, rng)?;
        let ex = batch.example;
        let aug = &setup.augmentation;
        let (x, y) = apply_pipeline(&ex.image, &ex.label, &aug.within_task, rng)?;
        let mut entries = Vec::with_capacity(ex.context.len());
        for (cx, cy) in ex.context.iter() {
            entries.push(apply_pipeline(cx, cy, &aug.within_task, rng)?);
        }
        let shared = sample_pipeline(&aug.task_level, rng);
        let (x, y) = apply_sampled(&shared, &x, &y)?;
        let entries = entries
            .iter()
            .map(|(cx, cy)| apply_sampled(&shared, cx, cy))
            .collect::<Result<Vec<_>>>()?;
        let example = TrainExample {
            image: x,
            label: y,
            context: ContextSet::from_entries(entries)?,
        };
        let (example, _) = maybe_substitute_synthetic(example, cfg.p_synth, &aug.synth_task, &setup.synth, rng)?;
        if !example.label.is_empty() {
            return Ok(example);
        }
    }
    Err(Error::input("could not draw a training example with a nonempty label"))
}

/// Mean context-only Dice on the validation split at the probe context size.
pub fn validation_dice(model: &Model, tasks: &[Task], cfg: &TrainConfig) -> Result<Option<f64>> {
    let views: Vec<Task> = tasks
        .iter()
        .filter(|t| !t.val.is_empty() && !t.train.is_empty())
        .map(|t| Task {
            id: t.id.clone(),
            train: t.train.clone(),
            val: Vec::new(),
            test: t.val.clone(),
        })
        .collect();
    if views.is_empty() {
        return Ok(None);
    }
    let sweep = SweepConfig {
        context_sizes: vec![cfg.probe_context],
        predictions_per_example: 1,
        examples_per_task: Some(cfg.val_examples_per_task),
        seed: cfg.seed,
    };
    let rows = run_incontext_sweep(model, &views, &sweep)?;
    Ok(Some(mean_dice(&rows, cfg.probe_context, 0)))
}

fn append_metrics(path: &Path, row: &MetricsRow) -> Result<()> {
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row).map_err(|e| Error::input(format!("csv: {e}")))?;
    w.flush()?;
    Ok(())
}

fn with_meta(params: &ModelParams, step: u64, opt: &OptimizerState, cfg: &TrainConfig, meta: &Meta) -> Result<Checkpoint> {
    Ok(Checkpoint {
        params: params.clone(),
        step,
        optimizer: Some(opt.clone()),
        meta: serde_json::json!({ "train": cfg, "selection": meta }),
    })
}

/// Initial weights for a run with the given seed.
pub fn initial_params(model: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX));
    ModelParams::init(model, &mut rng)
}

/// Runs training from scratch or from `resume` until `total_steps`.
/// Each step draws from an rng derived from `(seed, step)`, so a resumed run
/// reproduces an uninterrupted one exactly.
pub fn train(setup: &TrainSetup<'_>, resume: Option<Checkpoint>, progress: &mut dyn FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    let cfg = &setup.train;
    cfg.validate()?;
    setup.prompts.validate()?;
    let net = Network::new(&setup.model)?;
    let (mut params, mut opt, start, mut meta) = match resume {
        Some(ck) => {
            if ck.params.config != setup.model {
                return Err(Error::Checkpoint("checkpoint model config differs from the requested one".into()));
            }
            let meta: Meta = ck
                .meta
                .get("selection")
                .and_then(|m| serde_json::from_value(m.clone()).ok())
                .unwrap_or_default();
            let opt = ck.optimizer.unwrap_or_else(|| OptimizerState::new(net.num_params()));
            (ck.params, opt, ck.step, meta)
        }
        None => (initial_params(&setup.model, cfg.seed)?, OptimizerState::new(net.num_params()), 0, Meta::default()),
    };
    if let Some(dir) = &setup.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut log = Vec::new();
    let mut best: Option<Checkpoint> = None;
    if start == 0 {
        if let Some(dir) = &setup.out_dir {
            with_meta(&params, 0, &opt, cfg, &meta)?.save(&dir.join("last.ckpt"))?;
        }
    }
    for step in start..cfg.total_steps {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, step));
        let batch = (0..cfg.batch_size)
            .map(|_| draw_example(setup, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let report = train_step(&net, &mut params, &mut opt, &batch, cfg, &setup.prompts, &mut rng).map_err(|e| match e {
            Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss { step, detail },
            other => other,
        })?;
        let done = step + 1;
        let evaluate = cfg.eval_every > 0 && (done % cfg.eval_every == 0 || done == cfg.total_steps);
        let val_dice = if evaluate {
            validation_dice(&Model::new(params.clone())?, setup.validation, cfg)?
        } else {
            None
        };
        let row = MetricsRow {
            step: done,
            loss_total: report.loss.total,
            loss_dice: report.loss.dice,
            loss_focal: report.loss.focal,
            val_dice,
        };
        if let Some(v) = val_dice {
            if meta.best_val_dice.is_none_or(|b| v > b) {
                meta.best_val_dice = Some(v);
                meta.best_step = Some(done);
                let ck = with_meta(&params, done, &opt, cfg, &meta)?;
                if let Some(dir) = &setup.out_dir {
                    ck.save(&dir.join("best.ckpt"))?;
                }
                best = Some(ck);
            }
        }
        if let Some(dir) = &setup.out_dir {
            append_metrics(&dir.join("metrics.csv"), &row)?;
            if cfg.checkpoint_every > 0 && (done % cfg.checkpoint_every == 0 || done == cfg.total_steps) {
                with_meta(&params, done, &opt, cfg, &meta)?.save(&dir.join("last.ckpt"))?;
            }
        }
        progress(&row);
        log.push(row);
    }
    let last = with_meta(&params, cfg.total_steps.max(start), &opt, cfg, &meta)?;
    Ok(TrainOutcome {
        last,
        best,
        best_val_dice: meta.best_val_dice,
        log,
    })
}
