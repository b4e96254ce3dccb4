//! Experiment protocols: sequential dataset segmentation, in-context sweeps
//! and interactive in-context sweeps.

pub mod report;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::toy::mix_seed;
use crate::data::{Task, TaskId};
use crate::error::{Error, Result};
use crate::interaction::{protocol_correction, protocol_initial, Protocol};
use crate::metrics::dice_score;
use crate::network::Model;
use crate::types::{
    binarize, encode_interactions, stack_target, ContextSet, EncodedPrompts, Image, InteractionState, SegMask,
    TargetStack, DEFAULT_CLICK_RADIUS, DEFAULT_THRESHOLD,
};

/// Anything that maps a target stack and a context to a soft mask.
pub trait Segmenter {
    fn segment(&self, target: &TargetStack, context: &ContextSet) -> Result<SegMask>;
}

impl Segmenter for Model {
    fn segment(&self, target: &TargetStack, context: &ContextSet) -> Result<SegMask> {
        Ok(self.predict(target, context)?.probs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextLabelMode {
    BinaryPred,
    SoftPred,
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub target_dice: f64,
    pub max_clicks: usize,
    pub max_scribble_steps: usize,
    pub protocol: Protocol,
    pub num_images: usize,
    pub num_simulations: usize,
    pub context_label_mode: ContextLabelMode,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            target_dice: 0.90,
            max_clicks: 20,
            max_scribble_steps: 10,
            protocol: Protocol::CenterClicks,
            num_images: 18,
            num_simulations: 200,
            context_label_mode: ContextLabelMode::BinaryPred,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_dice > 0.0 && self.target_dice < 1.0) {
            return Err(Error::Config("target_dice must lie in (0, 1)".into()));
        }
        if self.max_clicks == 0 || self.max_scribble_steps == 0 {
            return Err(Error::Config("interaction caps must be at least 1".into()));
        }
        Ok(())
    }

    /// Interaction cap of the configured protocol. Every protocol step adds
    /// one click or one scribble step, so the cap is also a step count.
    pub fn cap(&self) -> usize {
        match self.protocol {
            Protocol::CenterClicks => self.max_clicks,
            Protocol::CenterlineScribbles => self.max_scribble_steps,
        }
    }
}

/// Interactions needed to reach `target`: index of the first entry of
/// `history` at or above it, where `history[i]` is the Dice after `i`
/// interactions. Returns `cap` if the target is never reached.
pub fn noi_to_target(history: &[f64], target: f64, cap: usize) -> usize {
    history.iter().position(|&d| d >= target).map_or(cap, |i| i.min(cap))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleTrace {
    /// 1-based position in the sequence, the seed image excluded.
    pub index: usize,
    pub noi: usize,
    pub dice_per_step: Vec<f64>,
    pub context_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub seed: u64,
    pub task: TaskId,
    pub protocol: Protocol,
    pub context_label_mode: ContextLabelMode,
    pub seed_noi: usize,
    pub examples: Vec<ExampleTrace>,
}

struct Interactive {
    history: Vec<f64>,
    prediction: SegMask,
}

fn predict(model: &dyn Segmenter, image: &Image, state: &InteractionState, prev: Option<&SegMask>, context: &ContextSet) -> Result<SegMask> {
    let prompts = if state.is_empty() {
        let (h, w) = image.shape();
        EncodedPrompts::zeros(h, w)
    } else {
        encode_interactions(state, DEFAULT_CLICK_RADIUS)?
    };
    model.segment(&stack_target(image, &prompts, prev)?, context)
}

/// Runs one protocol on one image. With `context_first`, the Dice history
/// starts with a context-only prediction made before any interaction;
/// otherwise it starts after the first protocol step. Stops at the target
/// Dice or after `max_steps` protocol steps.
#[allow(clippy::too_many_arguments)]
fn segment_interactively(
    model: &dyn Segmenter,
    image: &Image,
    truth: &SegMask,
    context: &ContextSet,
    protocol: Protocol,
    target: Option<f64>,
    max_steps: usize,
    context_first: bool,
) -> Result<Interactive> {
    let (h, w) = image.shape();
    let mut state = InteractionState::empty(h, w);
    let mut history = Vec::new();
    let mut prediction: Option<SegMask> = None;
    if context_first {
        let p = predict(model, image, &state, None, context)?;
        history.push(dice_score(&p, truth)?);
        prediction = Some(p);
    }
    let reached = |hist: &[f64]| target.is_some_and(|t| hist.last().is_some_and(|&d| d >= t));
    let mut steps = 0;
    while steps < max_steps && !reached(&history) {
        let more = match &prediction {
            None => protocol_initial(truth, protocol)?,
            Some(p) => match protocol_correction(truth, p, protocol) {
                Ok(s) => s,
                Err(Error::NoCorrectionNeeded) => break,
                Err(e) => return Err(e),
            },
        };
        state.merge(&more);
        let p = predict(model, image, &state, prediction.as_ref(), context)?;
        history.push(dice_score(&p, truth)?);
        prediction = Some(p);
        steps += 1;
    }
    Ok(Interactive {
        history,
        prediction: prediction.expect("at least one prediction"),
    })
}

fn context_label(mode: ContextLabelMode, prediction: &SegMask, truth: &SegMask) -> Result<SegMask> {
    match mode {
        ContextLabelMode::BinaryPred => binarize(prediction, DEFAULT_THRESHOLD),
        ContextLabelMode::SoftPred => Ok(prediction.clone()),
        ContextLabelMode::GroundTruth => Ok(truth.clone()),
    }
}

/// Segments `cfg.num_images` test images of one task in sequence, growing
/// the context with every finished image. The seed image comes from the
/// training split, is segmented with an empty context and is not reported.
pub fn run_sequential_dataset(model: &dyn Segmenter, task: &Task, cfg: &ProtocolConfig, run_seed: u64) -> Result<ProtocolTrace> {
    cfg.validate()?;
    if task.test.len() < cfg.num_images || task.train.is_empty() {
        return Err(Error::input(format!(
            "task {} needs {} test examples and one training example",
            task.id.dataset, cfg.num_images
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let cap = cfg.cap();
    let (seed_x, seed_y) = &task.train[rng.random_range(0..task.train.len())];
    let mut context = ContextSet::new();
    let seed_run = segment_interactively(model, seed_x, seed_y, &context, cfg.protocol, Some(cfg.target_dice), cap, false)?;
    // History index i holds the Dice after i + 1 steps here.
    let seed_noi = seed_run
        .history
        .iter()
        .position(|&d| d >= cfg.target_dice)
        .map_or(cap, |i| i + 1);
    context.push(seed_x.clone(), context_label(cfg.context_label_mode, &seed_run.prediction, seed_y)?)?;
    let order = sample_indices(&mut rng, task.test.len(), cfg.num_images).into_vec();
    let mut examples = Vec::with_capacity(cfg.num_images);
    for (n, &i) in order.iter().enumerate() {
        let (x, y) = &task.test[i];
        let run = segment_interactively(model, x, y, &context, cfg.protocol, Some(cfg.target_dice), cap, true)?;
        examples.push(ExampleTrace {
            index: n + 1,
            noi: noi_to_target(&run.history, cfg.target_dice, cap),
            dice_per_step: run.history,
            context_size: context.len(),
        });
        context.push(x.clone(), context_label(cfg.context_label_mode, &run.prediction, y)?)?;
    }
    Ok(ProtocolTrace {
        seed: run_seed,
        task: task.id.clone(),
        protocol: cfg.protocol,
        context_label_mode: cfg.context_label_mode,
        seed_noi,
        examples,
    })
}

/// `cfg.num_simulations` sequential runs spread round-robin over `tasks`.
pub fn run_sequential_many(model: &dyn Segmenter, tasks: &[Task], cfg: &ProtocolConfig) -> Result<Vec<ProtocolTrace>> {
    if tasks.is_empty() {
        return Err(Error::input("no tasks to evaluate"));
    }
    (0..cfg.num_simulations)
        .map(|r| run_sequential_dataset(model, &tasks[r % tasks.len()], cfg, mix_seed(cfg.seed, r as u64)))
        .collect()
}

/// Mean NoI per example position across runs; entry `k` is position `k + 1`.
pub fn mean_noi_by_position(traces: &[ProtocolTrace]) -> Vec<f64> {
    let n = traces.iter().map(|t| t.examples.len()).max().unwrap_or(0);
    (0..n)
        .map(|k| {
            let vals: Vec<f64> = traces.iter().filter_map(|t| t.examples.get(k)).map(|e| e.noi as f64).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

fn sample_context<R: Rng + ?Sized>(pool: &[(Image, SegMask)], size: usize, rng: &mut R) -> Result<ContextSet> {
    let entries = (0..size).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
    ContextSet::from_entries(entries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub task: String,
    pub example: usize,
    pub context_size: usize,
    /// Interaction step; 0 is the context-only prediction.
    pub step: usize,
    pub dice: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub context_sizes: Vec<usize>,
    pub predictions_per_example: usize,
    /// Test examples used per task; `None` uses all of them.
    pub examples_per_task: Option<usize>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            context_sizes: vec![1, 2, 4, 8, 16],
            predictions_per_example: 10,
            examples_per_task: None,
            seed: 0,
        }
    }
}

fn test_examples<'a>(task: &'a Task, cfg: &SweepConfig) -> &'a [(Image, SegMask)] {
    let n = cfg.examples_per_task.map_or(task.test.len(), |k| k.min(task.test.len()));
    &task.test[..n]
}

/// Context-only Dice for every test example and context size, averaged over
/// independently resampled ground-truth contexts drawn with replacement from
/// the training split. One row per (task, example, context size).
pub fn run_incontext_sweep(model: &dyn Segmenter, tasks: &[Task], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        if task.train.is_empty() {
            return Err(Error::input(format!("task {} has no training examples for context", task.id.dataset)));
        }
        for (ei, (x, y)) in test_examples(task, cfg).iter().enumerate() {
            for &size in &cfg.context_sizes {
                let mut total = 0.0;
                for k in 0..cfg.predictions_per_example {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, mix_seed(ti as u64, mix_seed(ei as u64, mix_seed(size as u64, k as u64)))));
                    let context = sample_context(&task.train, size, &mut rng)?;
                    let (h, w) = x.shape();
                    let p = predict(model, x, &InteractionState::empty(h, w), None, &context)?;
                    total += dice_score(&p, y)?;
                }
                rows.push(SweepRow {
                    task: task.id.dataset.clone(),
                    example: ei,
                    context_size: size,
                    step: 0,
                    dice: total / cfg.predictions_per_example as f64,
                });
            }
        }
    }
    Ok(rows)
}

/// Context-only prediction followed by `steps` protocol corrections, for
/// each context size; contexts are drawn as in [`run_incontext_sweep`] so
/// step 0 matches it for the same seeds. Rows hold the mean over seeds.
pub fn run_interactive_incontext(
    model: &dyn Segmenter,
    tasks: &[Task],
    cfg: &SweepConfig,
    protocol: Protocol,
    steps: usize,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        if task.train.is_empty() {
            return Err(Error::input(format!("task {} has no training examples for context", task.id.dataset)));
        }
        for (ei, (x, y)) in test_examples(task, cfg).iter().enumerate() {
            for &size in &cfg.context_sizes {
                let mut totals = vec![0.0; steps + 1];
                for k in 0..cfg.predictions_per_example {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, mix_seed(ti as u64, mix_seed(ei as u64, mix_seed(size as u64, k as u64)))));
                    let context = sample_context(&task.train, size, &mut rng)?;
                    let run = segment_interactively(model, x, y, &context, protocol, None, steps, true)?;
                    let last = *run.history.last().expect("step 0 exists");
                    for (s, t) in totals.iter_mut().enumerate() {
                        // A run that needed no further correction keeps its Dice.
                        *t += run.history.get(s).copied().unwrap_or(last);
                    }
                }
                for (s, t) in totals.into_iter().enumerate() {
                    rows.push(SweepRow {
                        task: task.id.dataset.clone(),
                        example: ei,
                        context_size: size,
                        step: s,
                        dice: t / cfg.predictions_per_example as f64,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Mean Dice of rows matching `context_size` and `step`, averaged per task
/// first so every task counts equally.
pub fn mean_dice(rows: &[SweepRow], context_size: usize, step: usize) -> f64 {
    let recs: Vec<crate::metrics::MetricRecord> = rows
        .iter()
        .filter(|r| r.context_size == context_size && r.step == step)
        .map(|r| crate::metrics::MetricRecord {
            subject: Some(r.example.to_string()),
            ..crate::metrics::MetricRecord::new(r.task.clone(), r.dice)
        })
        .collect();
    crate::metrics::hierarchical_mean(&recs).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Images whose foreground is exactly the pixels above 0.5.
    fn threshold_task(n: usize, seed: u64) -> Task {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let make = |rng: &mut ChaCha8Rng| {
            let (r, c, rad) = (rng.random_range(5..11) as f32, rng.random_range(5..11) as f32, rng.random_range(2..5) as f32);
            let px: Vec<f32> = (0..256)
                .map(|i| {
                    let (y, x) = ((i / 16) as f32, (i % 16) as f32);
                    if (y - r).powi(2) + (x - c).powi(2) <= rad * rad { 0.9 } else { 0.1 }
                })
                .collect();
            let label = px.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
            (Image::new(16, 16, px).unwrap(), SegMask::hard(16, 16, label).unwrap())
        };
        let mut task = Task::new(TaskId {
            dataset: format!("disc-{seed}"),
            modality: "synthetic".into(),
            axis: None,
            label: "disc".into(),
            subdataset: None,
        });
        task.train = (0..4).map(|_| make(&mut rng)).collect();
        task.test = (0..n).map(|_| make(&mut rng)).collect();
        task
    }

    struct Oracle;
    impl Segmenter for Oracle {
        fn segment(&self, target: &TargetStack, _: &ContextSet) -> Result<SegMask> {
            let (h, w) = target.shape();
            SegMask::hard(h, w, target.channel(0).iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect())
        }
    }

    struct Zero;
    impl Segmenter for Zero {
        fn segment(&self, target: &TargetStack, _: &ContextSet) -> Result<SegMask> {
            let (h, w) = target.shape();
            Ok(SegMask::empty(h, w))
        }
    }

    fn small_cfg(protocol: Protocol) -> ProtocolConfig {
        ProtocolConfig {
            num_images: 5,
            num_simulations: 6,
            protocol,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn noi_counts_steps_to_target() {
        assert_eq!(noi_to_target(&[0.95], 0.9, 20), 0);
        assert_eq!(noi_to_target(&[0.5, 0.8, 0.91], 0.9, 20), 2);
        assert_eq!(noi_to_target(&[0.5, 0.6], 0.9, 20), 20);
    }

    #[test]
    fn oracle_needs_no_interactions() {
        let tasks = [threshold_task(6, 1), threshold_task(6, 2)];
        for protocol in [Protocol::CenterClicks, Protocol::CenterlineScribbles] {
            let traces = run_sequential_many(&Oracle, &tasks, &small_cfg(protocol)).unwrap();
            assert!(traces.iter().flat_map(|t| &t.examples).all(|e| e.noi == 0));
        }
    }

    #[test]
    fn zero_model_hits_the_cap() {
        let tasks = [threshold_task(6, 3)];
        for protocol in [Protocol::CenterClicks, Protocol::CenterlineScribbles] {
            let cfg = small_cfg(protocol);
            let traces = run_sequential_many(&Zero, &tasks, &cfg).unwrap();
            for t in &traces {
                assert_eq!(t.seed_noi, cfg.cap());
                assert!(t.examples.iter().all(|e| e.noi == cfg.cap()));
                assert_eq!(t.examples.iter().map(|e| e.context_size).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
            }
        }
    }

    #[test]
    fn sequential_runs_are_seed_deterministic() {
        let tasks = [threshold_task(6, 4)];
        let cfg = small_cfg(Protocol::CenterClicks);
        let a = run_sequential_many(&Zero, &tasks, &cfg).unwrap();
        let b = run_sequential_many(&Zero, &tasks, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interactive_sweep_starts_from_context_only_sweep() {
        let tasks = [threshold_task(3, 5)];
        let cfg = SweepConfig {
            context_sizes: vec![1, 2],
            predictions_per_example: 2,
            examples_per_task: None,
            seed: 9,
        };
        let plain = run_incontext_sweep(&Oracle, &tasks, &cfg).unwrap();
        let inter = run_interactive_incontext(&Oracle, &tasks, &cfg, Protocol::CenterClicks, 2).unwrap();
        let step0: Vec<_> = inter.iter().filter(|r| r.step == 0).cloned().collect();
        assert_eq!(plain, step0);
        assert_eq!(mean_dice(&plain, 1, 0), 1.0);
    }
}
