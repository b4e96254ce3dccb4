//! Dataset manifests and the in-memory corpus built from them.
//!
//! A manifest is one JSON document per dataset:
//!
//! ```json
//! {
//!   "name": "shapes-003",
//!   "modality": "synthetic",
//!   "subdataset": null,
//!   "subjects": [
//!     {
//!       "id": "s000",
//!       "image": "images/s000.png",
//!       "labels": { "target": "labels/s000.png" },
//!       "split": "train"
//!     }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. Rasters are 8-bit
//! grayscale PNG or raw `.grid` files (see [`super::io`]). A subject whose
//! files are 3D grids must carry `"slice": {"axis": 0, "mode": "max_slice"}`.
//! Subjects without a `split` are assigned one by [`split_subjects`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{read_raster, Grid};
use super::preprocess::{preprocess, preprocess_label, select_slice, SliceMode};
use super::{Split, TaskId};
use crate::error::{Error, Result};
use crate::types::{Image, SegMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub axis: u8,
    pub mode: SliceMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub image: String,
    pub labels: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub modality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdataset: Option<String>,
    pub subjects: Vec<SubjectEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for s in &m.subjects {
            for rel in std::iter::once(&s.image).chain(s.labels.values()) {
                let p = m.root.join(rel);
                if !p.is_file() {
                    return Err(Error::input(format!("manifest {} references missing file {}", m.name, p.display())));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Split of every subject, filling gaps deterministically from `seed`.
    pub fn resolved_splits(&self, seed: u64) -> Vec<Split> {
        let auto = split_subjects(self.subjects.len(), seed);
        self.subjects.iter().zip(auto).map(|(s, a)| s.split.unwrap_or(a)).collect()
    }
}

/// Shuffles `n` subjects by `seed` and assigns floor(20%) to validation,
/// floor(20%) to test and the rest to training.
pub fn split_subjects(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = n / 5;
    let n_test = n / 5;
    let mut out = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_val {
            Split::Val
        } else if rank < n_val + n_test {
            Split::Test
        } else {
            Split::Train
        };
    }
    out
}

/// One binary task with its examples per split.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub train: Vec<(Image, SegMask)>,
    pub val: Vec<(Image, SegMask)>,
    pub test: Vec<(Image, SegMask)>,
}

impl Task {
    pub fn new(id: TaskId) -> Self {
        Self {
            id,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn split(&self, split: Split) -> &[(Image, SegMask)] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<(Image, SegMask)> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

/// Preprocessed tasks loaded into memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub tasks: Vec<Task>,
}

fn load_pair(root: &Path, subject: &SubjectEntry, label_path: &str, side: usize) -> Result<(Image, SegMask)> {
    let img = read_raster(&root.join(&subject.image))?;
    let lab = read_raster(&root.join(label_path))?;
    if img.dims != lab.dims {
        return Err(Error::input(format!("subject {}: image and label shapes differ", subject.id)));
    }
    match (img.dims.len(), subject.slice) {
        (2, _) => Ok((
            preprocess(&img.data, img.dims[0], img.dims[1], side)?,
            preprocess_label(&lab.data, lab.dims[0], lab.dims[1], side)?,
        )),
        (3, Some(spec)) => select_slice(&img.data, &lab.data, dims3(&img)?, spec.axis as usize, spec.mode, side),
        (3, None) => Err(Error::input(format!("subject {}: 3D volume without slice selection", subject.id))),
        (r, _) => Err(Error::input(format!("subject {}: unsupported rank {r}", subject.id))),
    }
}

fn dims3(g: &Grid) -> Result<[usize; 3]> {
    g.dims.as_slice().try_into().map_err(|_| Error::input("expected a 3D grid"))
}

impl Corpus {
    pub fn from_manifests(manifests: &[DatasetManifest], side: usize, split_seed: u64) -> Result<Self> {
        let mut tasks: BTreeMap<TaskId, Task> = BTreeMap::new();
        for m in manifests {
            let splits = m.resolved_splits(split_seed);
            for (subject, split) in m.subjects.iter().zip(splits) {
                for (label_name, label_path) in &subject.labels {
                    let id = TaskId {
                        dataset: m.name.clone(),
                        modality: m.modality.clone(),
                        axis: subject.slice.map(|s| s.axis),
                        label: label_name.clone(),
                        subdataset: m.subdataset.clone(),
                    };
                    let pair = load_pair(&m.root, subject, label_path, side)?;
                    tasks.entry(id.clone()).or_insert_with(|| Task::new(id)).split_mut(split).push(pair);
                }
            }
        }
        Ok(Self {
            tasks: tasks.into_values().collect(),
        })
    }

    /// Loads every `*.json` manifest directly under `root`.
    pub fn load_dir(root: &Path, side: usize, split_seed: u64) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::input(format!("no manifests found in {}", root.display())));
        }
        let manifests = paths.iter().map(|p| DatasetManifest::load(p)).collect::<Result<Vec<_>>>()?;
        Self::from_manifests(&manifests, side, split_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::io::{write_grid, write_png_gray};

    #[test]
    fn split_counts() {
        let count = |v: &[Split], s: Split| v.iter().filter(|&&x| x == s).count();
        let a = split_subjects(10, 3);
        assert_eq!((count(&a, Split::Train), count(&a, Split::Val), count(&a, Split::Test)), (6, 2, 2));
        let b = split_subjects(11, 3);
        assert_eq!((count(&b, Split::Train), count(&b, Split::Val), count(&b, Split::Test)), (7, 2, 2));
        assert_eq!(split_subjects(11, 3), b);
    }

    #[test]
    fn loads_png_and_volume_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("img")).unwrap();
        let mut subjects = Vec::new();
        for i in 0..5 {
            let img: Vec<f32> = (0..64).map(|p| ((p + i) % 7) as f32 / 7.0).collect();
            let lab: Vec<f32> = (0..64).map(|p| if p % 8 < 4 { 1.0 } else { 0.0 }).collect();
            write_png_gray(&root.join(format!("img/{i}.png")), 8, 8, &img).unwrap();
            write_png_gray(&root.join(format!("img/{i}_y.png")), 8, 8, &lab).unwrap();
            subjects.push(SubjectEntry {
                id: format!("s{i}"),
                image: format!("img/{i}.png"),
                labels: BTreeMap::from([("fg".to_string(), format!("img/{i}_y.png"))]),
                split: None,
                slice: None,
            });
        }
        let vol = Grid::new(vec![3, 8, 8], (0..192).map(|p| p as f32).collect()).unwrap();
        let vlab = Grid::new(vec![3, 8, 8], (0..192).map(|p| if p / 64 == 2 && p % 2 == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        write_grid(std::fs::File::create(root.join("img/v.grid")).unwrap(), &vol).unwrap();
        write_grid(std::fs::File::create(root.join("img/v_y.grid")).unwrap(), &vlab).unwrap();
        subjects.push(SubjectEntry {
            id: "vol".into(),
            image: "img/v.grid".into(),
            labels: BTreeMap::from([("fg".to_string(), "img/v_y.grid".to_string())]),
            split: Some(Split::Test),
            slice: Some(SliceSpec {
                axis: 0,
                mode: SliceMode::MaxSlice,
            }),
        });
        let m = DatasetManifest {
            name: "d".into(),
            modality: "mr".into(),
            subdataset: None,
            subjects,
            root: PathBuf::new(),
        };
        m.save(&root.join("d.json")).unwrap();
        let corpus = Corpus::load_dir(root, 8, 1).unwrap();
        // The volume subject carries an axis, so it forms its own task.
        assert_eq!(corpus.tasks.len(), 2);
        let flat = corpus.tasks.iter().find(|t| t.id.axis.is_none()).unwrap();
        assert_eq!(flat.train.len() + flat.val.len() + flat.test.len(), 5);
        let vol_task = corpus.tasks.iter().find(|t| t.id.axis == Some(0)).unwrap();
        assert_eq!(vol_task.test[0].1.area(), 32);

        std::fs::remove_file(root.join("img/3.png")).unwrap();
        assert!(DatasetManifest::load(&root.join("d.json")).is_err());
    }
}
