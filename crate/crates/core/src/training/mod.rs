//! Losses, optimizer and the training loop.

pub mod adam;
pub mod gradcheck;
pub mod loss;
pub mod step;
pub mod trainer;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_update, AdamConfig};
pub use gradcheck::{check_training_gradient, GradCheckReport};
pub use loss::{focal_loss, segmentation_loss, soft_dice_loss, LossConfig, LossValue};
pub use step::{example_gradient, replay_loss, train_step, unroll_example, StepReport, TrainExample, Unroll};
pub use trainer::{draw_example, initial_params, train, validation_dice, MetricsRow, TrainOutcome, TrainSetup};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_context: usize,
    pub interaction_steps: usize,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub p_synth: f64,
    /// Probability that the first unrolled step of an example gets no
    /// interactions, so the model also learns context-only prediction.
    pub p_context_only: f64,
    pub total_steps: u64,
    pub checkpoint_every: u64,
    pub eval_every: u64,
    /// Context size used when scoring validation tasks for model selection.
    pub probe_context: usize,
    /// Validation targets scored per task at each evaluation.
    pub val_examples_per_task: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 2,
            max_context: 64,
            interaction_steps: 3,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            p_synth: 0.5,
            p_context_only: 0.0,
            total_steps: 100_000,
            checkpoint_every: 1000,
            eval_every: 1000,
            probe_context: 16,
            val_examples_per_task: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interaction_steps == 0 {
            return Err(Error::Config("interaction_steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.loss.focal_gamma < 0.0 {
            return Err(Error::Config("focal_gamma must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.p_synth) {
            return Err(Error::Config("p_synth must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.p_context_only) {
            return Err(Error::Config("p_context_only must lie in [0, 1]".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Context size drawn uniformly from `0..=max_context`.
pub fn sample_context_size<R: Rng + ?Sized>(rng: &mut R, max_context: usize) -> usize {
    rng.random_range(0..=max_context)
}
