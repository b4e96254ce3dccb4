//! Procedural toy corpus of shape tasks.
//!
//! A task family fixes a palette of object types (intensity, size, aspect,
//! boundary wobble) and designates one type as the target, which also has a
//! preferred location. Each image shows the target object plus a few
//! distractors of other types on a textured background. A single image does
//! not say which object is the target; the context does.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::io::write_png_gray;
use super::manifest::{Corpus, DatasetManifest, SubjectEntry, Task};
use super::{SampleBatch, Split, TaskId, TaskSource};
use crate::error::Result;
use crate::training::TrainExample;
use crate::types::{ContextSet, Image, SegMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub resolution: usize,
    pub object_types: usize,
    pub distractors: [usize; 2],
    /// Object radius range in pixels at 64×64; scaled with resolution.
    pub radius: [f64; 2],
    pub intensity_jitter: f64,
    pub size_jitter: f64,
    /// Spread of the target position around the family's preferred location,
    /// as a fraction of the side length.
    pub position_jitter: f64,
    pub pixel_noise: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            object_types: 4,
            distractors: [1, 3],
            radius: [7.0, 13.0],
            intensity_jitter: 0.05,
            size_jitter: 0.15,
            position_jitter: 0.12,
            pixel_noise: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectType {
    pub intensity: f64,
    pub radius: f64,
    pub aspect: f64,
    pub wobble: f64,
    pub harmonic: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyFamily {
    pub seed: u64,
    pub types: Vec<ObjectType>,
    pub target: usize,
    /// Preferred target centre as fractions of the side length.
    pub anchor: (f64, f64),
    pub background: f64,
    pub texture: f64,
}

/// Stateless 64-bit mixer used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Placed {
    kind: usize,
    cy: f64,
    cx: f64,
    radius: f64,
    angle: f64,
    phase: f64,
    intensity: f64,
}

impl ToyFamily {
    pub fn new(seed: u64, cfg: &ToyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.object_types.max(2);
        // Evenly spaced intensity levels in a random order keep types apart.
        let mut levels: Vec<f64> = (0..n).map(|i| 0.35 + 0.6 * i as f64 / (n - 1) as f64).collect();
        for i in (1..n).rev() {
            levels.swap(i, rng.random_range(0..=i));
        }
        let types = levels
            .into_iter()
            .map(|intensity| ObjectType {
                intensity,
                radius: rng.random_range(cfg.radius[0]..cfg.radius[1]),
                aspect: rng.random_range(0.6..1.0),
                wobble: rng.random_range(0.0..0.25),
                harmonic: rng.random_range(2..=5),
            })
            .collect();
        Self {
            seed,
            types,
            target: rng.random_range(0..n),
            anchor: (rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)),
            background: rng.random_range(0.0..0.25),
            texture: rng.random_range(0.0..0.08),
        }
    }

    /// Deterministic example `index` of this family.
    pub fn example(&self, index: u64, cfg: &ToyConfig) -> (Image, SegMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, index));
        let side = cfg.resolution;
        let s = side as f64;
        let scale = s / 64.0;
        let jitter = |rng: &mut ChaCha8Rng, amount: f64| rng.random_range(-amount..=amount);
        let mut placed: Vec<Placed> = Vec::new();
        let t = &self.types[self.target];
        let radius = t.radius * scale * (1.0 + jitter(&mut rng, cfg.size_jitter));
        let margin = radius + 1.0;
        placed.push(Placed {
            kind: self.target,
            cy: (self.anchor.0 * s + jitter(&mut rng, cfg.position_jitter * s)).clamp(margin, s - margin),
            cx: (self.anchor.1 * s + jitter(&mut rng, cfg.position_jitter * s)).clamp(margin, s - margin),
            radius,
            angle: rng.random_range(0.0..PI),
            phase: rng.random_range(0.0..2.0 * PI),
            intensity: t.intensity + jitter(&mut rng, cfg.intensity_jitter),
        });
        let n_distract = rng.random_range(cfg.distractors[0]..=cfg.distractors[1]);
        let others: Vec<usize> = (0..self.types.len()).filter(|&k| k != self.target).collect();
        for _ in 0..n_distract {
            let kind = others[rng.random_range(0..others.len())];
            let ty = &self.types[kind];
            let radius = ty.radius * scale * (1.0 + jitter(&mut rng, cfg.size_jitter));
            for _ in 0..50 {
                let margin = radius + 1.0;
                if margin * 2.0 >= s {
                    break;
                }
                let cy = rng.random_range(margin..s - margin);
                let cx = rng.random_range(margin..s - margin);
                let clear = placed
                    .iter()
                    .all(|p| ((p.cy - cy).powi(2) + (p.cx - cx).powi(2)).sqrt() > p.radius + radius + 2.0);
                if clear {
                    placed.push(Placed {
                        kind,
                        cy,
                        cx,
                        radius,
                        angle: rng.random_range(0.0..PI),
                        phase: rng.random_range(0.0..2.0 * PI),
                        intensity: ty.intensity + jitter(&mut rng, cfg.intensity_jitter),
                    });
                    break;
                }
            }
        }
        let (f1, f2) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
        let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let noise = Normal::new(0.0, cfg.pixel_noise).expect("finite noise");
        let mut pixels = vec![0.0f32; side * side];
        let mut label = vec![0.0f32; side * side];
        for r in 0..side {
            for c in 0..side {
                let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
                let mut v = self.background
                    + self.texture * ((f1 * 2.0 * PI * y / s + p1).sin() + (f2 * 2.0 * PI * x / s + p2).sin());
                for (i, p) in placed.iter().enumerate() {
                    if self.inside(p, y, x) {
                        v = p.intensity;
                        if i == 0 {
                            label[r * side + c] = 1.0;
                        }
                    }
                }
                pixels[r * side + c] = (v + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32;
            }
        }
        (
            Image::from_clamped(side, side, pixels),
            SegMask::hard(side, side, label).expect("binary label"),
        )
    }

    fn inside(&self, p: &Placed, y: f64, x: f64) -> bool {
        let ty = &self.types[p.kind];
        let (dy, dx) = (y - p.cy, x - p.cx);
        let (sa, ca) = p.angle.sin_cos();
        let u = (ca * dx + sa * dy) / p.radius;
        let v = (-sa * dx + ca * dy) / (p.radius * ty.aspect);
        let rho = (u * u + v * v).sqrt();
        let phi = v.atan2(u);
        rho <= 1.0 + ty.wobble * (ty.harmonic as f64 * phi + p.phase).sin()
    }

    pub fn task_id(&self) -> TaskId {
        TaskId {
            dataset: format!("shapes-{:016x}", self.seed),
            modality: "synthetic".into(),
            axis: None,
            label: "target".into(),
            subdataset: None,
        }
    }
}

/// Unbounded stream of training families derived from `root_seed`.
#[derive(Clone, Debug)]
pub struct ToySource {
    pub cfg: ToyConfig,
    pub root_seed: u64,
}

impl TaskSource for ToySource {
    fn sample(&self, m: usize, rng: &mut dyn RngCore) -> Result<SampleBatch> {
        let family = ToyFamily::new(mix_seed(self.root_seed, rng.next_u64()), &self.cfg);
        let base = rng.next_u64();
        let mut pairs = (0..=m as u64).map(|i| family.example(base.wrapping_add(i), &self.cfg));
        let (image, label) = pairs.next().expect("at least the target");
        Ok(SampleBatch {
            example: TrainExample {
                image,
                label,
                context: ContextSet::from_entries(pairs.collect())?,
            },
            task: family.task_id(),
        })
    }
}

/// A finite corpus of `n_tasks` families, each with `per_split[k]` examples
/// in train/val/test.
pub fn toy_corpus(cfg: &ToyConfig, n_tasks: usize, per_split: [usize; 3], root_seed: u64) -> Corpus {
    let tasks = (0..n_tasks as u64)
        .map(|i| {
            let family = ToyFamily::new(mix_seed(root_seed, i), cfg);
            let mut task = Task::new(family.task_id());
            let mut index = 0u64;
            for (split, &count) in [Split::Train, Split::Val, Split::Test].iter().zip(&per_split) {
                for _ in 0..count {
                    task.split_mut(*split).push(family.example(index, cfg));
                    index += 1;
                }
            }
            task
        })
        .collect();
    Corpus { tasks }
}

/// Writes a toy corpus as PNG files with one manifest per family.
pub fn write_toy_dataset(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for task in &corpus.tasks {
        let name = &task.id.dataset;
        let sub = dir.join(name);
        std::fs::create_dir_all(&sub)?;
        let mut subjects = Vec::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            for (i, (x, y)) in task.split(split).iter().enumerate() {
                let id = format!("{split:?}-{i:03}").to_lowercase();
                let (h, w) = x.shape();
                write_png_gray(&sub.join(format!("{id}.png")), h, w, x.pixels())?;
                write_png_gray(&sub.join(format!("{id}_label.png")), h, w, y.pixels())?;
                subjects.push(SubjectEntry {
                    id: id.clone(),
                    image: format!("{name}/{id}.png"),
                    labels: BTreeMap::from([(task.id.label.clone(), format!("{name}/{id}_label.png"))]),
                    split: Some(split),
                    slice: None,
                });
            }
        }
        let manifest = DatasetManifest {
            name: name.clone(),
            modality: task.id.modality.clone(),
            subdataset: None,
            subjects,
            root: dir.to_path_buf(),
        };
        manifest.save(&dir.join(format!("{name}.json")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples_are_deterministic_and_nonempty() {
        let cfg = ToyConfig::default();
        let fam = ToyFamily::new(11, &cfg);
        for i in 0..20 {
            let (x, y) = fam.example(i, &cfg);
            assert_eq!((x.clone(), y.clone()), fam.example(i, &cfg));
            assert!(y.area() > 30, "area {}", y.area());
            assert!(x.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(fam.example(0, &cfg), fam.example(1, &cfg));
    }

    #[test]
    fn source_builds_context_of_requested_size() {
        let src = ToySource {
            cfg: ToyConfig::default(),
            root_seed: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = src.sample(5, &mut rng).unwrap();
        assert_eq!(b.example.context.len(), 5);
        assert!(b.example.context.iter().all(|(x, _)| x != &b.example.image));
    }

    #[test]
    fn written_dataset_loads_back() {
        let cfg = ToyConfig {
            resolution: 16,
            radius: [12.0, 16.0],
            ..ToyConfig::default()
        };
        let corpus = toy_corpus(&cfg, 2, [3, 1, 1], 5);
        let dir = tempfile::tempdir().unwrap();
        write_toy_dataset(dir.path(), &corpus).unwrap();
        let back = Corpus::load_dir(dir.path(), 16, 0).unwrap();
        assert_eq!(back.tasks.len(), 2);
        for (a, b) in corpus.tasks.iter().zip(&back.tasks) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.train.len(), b.train.len());
            assert_eq!(a.train[0].1, b.train[0].1);
        }
    }
}
