//! Datasets: manifests, preprocessing, splits and task sampling.

pub mod io;
pub mod manifest;
pub mod preprocess;
pub mod toy;

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use manifest::{split_subjects, Corpus, DatasetManifest, SubjectEntry, Task};
pub use preprocess::{preprocess, preprocess_label, select_slice, SliceMode};

use crate::error::{Error, Result};
use crate::training::TrainExample;
use crate::types::ContextSet;

/// One binary 2D segmentation task.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub dataset: String,
    pub modality: String,
    #[serde(default)]
    pub axis: Option<u8>,
    pub label: String,
    #[serde(default)]
    pub subdataset: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A target and a context of `m` other examples from the same task.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub example: TrainExample,
    pub task: TaskId,
}

/// Anything that can produce training samples.
pub trait TaskSource {
    fn sample(&self, m: usize, rng: &mut dyn RngCore) -> Result<SampleBatch>;
}

/// Uniform over datasets, then over (subdataset, modality, axis) groups,
/// then labels; target and context drawn without replacement from that task.
pub fn hierarchical_sample<R: Rng + ?Sized>(corpus: &Corpus, split: Split, m: usize, rng: &mut R) -> Result<SampleBatch> {
    type Group<'a> = BTreeMap<(Option<String>, String, Option<u8>), Vec<&'a Task>>;
    let mut tree: BTreeMap<&str, Group<'_>> = BTreeMap::new();
    for task in &corpus.tasks {
        if task.split(split).len() < m + 1 {
            continue;
        }
        let id = &task.id;
        tree.entry(id.dataset.as_str())
            .or_default()
            .entry((id.subdataset.clone(), id.modality.clone(), id.axis))
            .or_default()
            .push(task);
    }
    if tree.is_empty() {
        return Err(Error::input(format!("no task has {} examples in the requested split", m + 1)));
    }
    let datasets: Vec<_> = tree.values().collect();
    let groups: Vec<_> = datasets[rng.random_range(0..datasets.len())].values().collect();
    let labels = groups[rng.random_range(0..groups.len())];
    let task = labels[rng.random_range(0..labels.len())];
    let pool = task.split(split);
    let picks = sample_indices(rng, pool.len(), m + 1).into_vec();
    let (image, label) = pool[picks[0]].clone();
    let context = ContextSet::from_entries(picks[1..].iter().map(|&i| pool[i].clone()).collect())?;
    Ok(SampleBatch {
        example: TrainExample { image, label, context },
        task: task.id.clone(),
    })
}

/// Samples from the training split of a loaded corpus.
pub struct CorpusSource<'a> {
    pub corpus: &'a Corpus,
    pub split: Split,
}

impl TaskSource for CorpusSource<'_> {
    fn sample(&self, m: usize, rng: &mut dyn RngCore) -> Result<SampleBatch> {
        hierarchical_sample(self.corpus, self.split, m, rng)
    }
}
