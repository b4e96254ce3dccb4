//! The experiment configuration file: one JSON document with a section per
//! module. Missing fields take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::toy::{toy_corpus, ToyConfig, ToySource};
use crate::data::{Corpus, CorpusSource, Split, Task, TaskSource};
use crate::error::{Error, Result};
use crate::evaluation::{ProtocolConfig, SweepConfig};
use crate::interaction::PromptSampleConfig;
use crate::network::ModelConfig;
use crate::synthetic::{AugmentationSpec, Pipeline, SynthConfig};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Procedural shape families; no files needed.
    Toy,
    /// Dataset manifests (`*.json`) in `DataConfig::root`.
    Manifests,
}

/// A finite toy corpus: `tasks` families with `per_split` train/val/test
/// examples each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpusSpec {
    pub tasks: usize,
    pub per_split: [usize; 3],
    pub seed: u64,
}

impl ToyCorpusSpec {
    pub fn build(&self, cfg: &ToyConfig) -> Corpus {
        toy_corpus(cfg, self.tasks, self.per_split, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    pub root: Option<PathBuf>,
    pub split_seed: u64,
    pub toy: ToyConfig,
    /// Root seed of the unbounded training family stream.
    pub toy_train_seed: u64,
    /// Families scored during training for checkpoint selection.
    pub toy_validation: ToyCorpusSpec,
    /// Families never seen in training, used by the evaluation commands.
    pub toy_heldout: ToyCorpusSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Toy,
            root: None,
            split_seed: 0,
            toy: ToyConfig::default(),
            toy_train_seed: 7,
            toy_validation: ToyCorpusSpec {
                tasks: 8,
                per_split: [16, 8, 0],
                seed: 0xA11,
            },
            toy_heldout: ToyCorpusSpec {
                tasks: 12,
                per_split: [16, 0, 24],
                seed: 0xBEEF,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub augmentation: AugmentationSpec,
    pub synth: SynthConfig,
    pub prompts: PromptSampleConfig,
    pub data: DataConfig,
    pub protocol: ProtocolConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ExperimentConfig {
    /// Full-size model and training schedule on dataset manifests.
    pub fn full_scale() -> Self {
        let model = ModelConfig::full_scale();
        Self {
            prompts: PromptSampleConfig::for_resolution(model.resolution),
            model,
            training: TrainConfig::default(),
            augmentation: AugmentationSpec::default(),
            synth: SynthConfig::default(),
            data: DataConfig {
                source: DataSource::Manifests,
                ..DataConfig::default()
            },
            protocol: ProtocolConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// A desk-sized run on toy shape families that trains in minutes on one
    /// CPU core.
    pub fn toy() -> Self {
        let model = ModelConfig::desk();
        Self {
            prompts: PromptSampleConfig::for_resolution(model.resolution),
            model,
            training: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 2,
                max_context: 8,
                p_synth: 0.0,
                p_context_only: 0.25,
                total_steps: 1500,
                checkpoint_every: 250,
                eval_every: 500,
                probe_context: 8,
                val_examples_per_task: 4,
                seed: 1,
                ..TrainConfig::default()
            },
            augmentation: AugmentationSpec {
                task_level: Pipeline::identity(),
                ..AugmentationSpec::default()
            },
            synth: SynthConfig::default(),
            data: DataConfig::default(),
            protocol: ProtocolConfig {
                num_images: 12,
                num_simulations: 100,
                ..ProtocolConfig::default()
            },
            sweep: SweepConfig {
                context_sizes: vec![1, 2, 4, 8],
                predictions_per_example: 1,
                examples_per_task: Some(8),
                seed: 5,
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        self.prompts.validate()?;
        self.protocol.validate()?;
        if self.data.source == DataSource::Toy && self.data.toy.resolution != self.model.resolution {
            return Err(Error::Config(format!(
                "toy resolution {} differs from model resolution {}",
                self.data.toy.resolution, self.model.resolution
            )));
        }
        if self.data.source == DataSource::Manifests && self.data.root.is_none() {
            return Err(Error::Config("manifest data needs data.root or --data-root".into()));
        }
        Ok(())
    }

    /// Materializes the data section.
    pub fn load_data(&self) -> Result<ExperimentData> {
        match self.data.source {
            DataSource::Toy => Ok(ExperimentData {
                toy: Some(ToySource {
                    cfg: self.data.toy.clone(),
                    root_seed: self.data.toy_train_seed,
                }),
                corpus: None,
                validation: self.data.toy_validation.build(&self.data.toy).tasks,
                evaluation: self.data.toy_heldout.build(&self.data.toy).tasks,
            }),
            DataSource::Manifests => {
                let root = self.data.root.as_ref().ok_or_else(|| Error::Config("data.root is not set".into()))?;
                let corpus = Corpus::load_dir(root, self.model.resolution, self.data.split_seed)?;
                let tasks = corpus.tasks.clone();
                Ok(ExperimentData {
                    toy: None,
                    corpus: Some(corpus),
                    validation: tasks.clone(),
                    evaluation: tasks,
                })
            }
        }
    }
}

/// Training source plus the task lists used for validation and evaluation.
pub struct ExperimentData {
    toy: Option<ToySource>,
    corpus: Option<Corpus>,
    pub validation: Vec<Task>,
    pub evaluation: Vec<Task>,
}

impl ExperimentData {
    pub fn source(&self) -> Box<dyn TaskSource + '_> {
        match (&self.toy, &self.corpus) {
            (Some(t), _) => Box::new(t.clone()),
            (None, Some(c)) => Box::new(CorpusSource {
                corpus: c,
                split: Split::Train,
            }),
            (None, None) => unreachable!("data always has a source"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"training": {"total_steps": 3}}"#).unwrap();
        assert_eq!(cfg.training.total_steps, 3);
        assert_eq!(cfg.model, ExperimentConfig::toy().model);
    }

    #[test]
    fn json_round_trip() {
        for cfg in [ExperimentConfig::toy(), ExperimentConfig::full_scale()] {
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn mismatched_toy_resolution_is_rejected() {
        let mut cfg = ExperimentConfig::toy();
        cfg.data.toy.resolution = 32;
        assert!(cfg.validate().is_err());
    }
}
