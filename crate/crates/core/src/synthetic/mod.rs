//! Synthetic tasks built from a single image: pick one superpixel as the
//! label and augment copies of the pair into a target and its context.

pub mod augment;
pub mod filters;
pub mod superpixel;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use augment::{apply_pipeline, apply_sampled, sample_pipeline, AugmentationSpec, Pipeline, Sampled, Transform};
pub use superpixel::{superpixel_partition, SuperpixelMap, SuperpixelParams};

use crate::error::{Error, Result};
use crate::training::TrainExample;
use crate::types::{ContextSet, Image, SegMask};

/// Attempts at producing a nonempty target label before giving up.
pub const SYNTH_RETRIES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub lambda_max: f64,
    pub superpixels: SuperpixelParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lambda_max: 500.0,
            superpixels: SuperpixelParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthTask {
    pub target: (Image, SegMask),
    pub context: Vec<(Image, SegMask)>,
    pub lambda: f64,
    pub segment: u32,
}

/// Indicator of one uniformly chosen segment, with the chosen id.
pub fn sample_synth_label<R: Rng + ?Sized>(map: &SuperpixelMap, rng: &mut R) -> Result<(SegMask, u32)> {
    if map.k == 0 {
        return Err(Error::input("superpixel map has no segments"));
    }
    let id = rng.random_range(1..=map.k);
    Ok((SegMask::hard(map.height, map.width, map.indicator(id))?, id))
}

/// A task of `m + 1` independently augmented copies of `(x0, y_synth)`;
/// the first copy is the target.
pub fn make_synth_task<R: Rng + ?Sized>(
    x0: &Image,
    m: usize,
    pipeline: &Pipeline,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<SynthTask> {
    let lambda = if cfg.lambda_max > 1.0 {
        rng.random_range(1.0..cfg.lambda_max)
    } else {
        1.0
    };
    let map = superpixel_partition(x0, lambda, &cfg.superpixels)?;
    let (label, segment) = sample_synth_label(&map, rng)?;
    let mut target = None;
    for _ in 0..SYNTH_RETRIES {
        let (x, y) = apply_pipeline(x0, &label, pipeline, rng)?;
        if !y.is_empty() {
            target = Some((x, y));
            break;
        }
    }
    let target = target.ok_or(Error::EmptySynthLabel(SYNTH_RETRIES))?;
    let context = (0..m)
        .map(|_| apply_pipeline(x0, &label, pipeline, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthTask {
        target,
        context,
        lambda,
        segment,
    })
}

/// With probability `p_synth`, replaces the sample by a synthetic task built
/// from its target image, keeping the context size. Returns whether the
/// substitution happened. A synthetic task that fails to produce a nonempty
/// label falls back to the real sample.
pub fn maybe_substitute_synthetic<R: Rng + ?Sized>(
    sample: TrainExample,
    p_synth: f64,
    pipeline: &Pipeline,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<(TrainExample, bool)> {
    if !(0.0..=1.0).contains(&p_synth) {
        return Err(Error::input(format!("p_synth must lie in [0, 1], got {p_synth}")));
    }
    if p_synth == 0.0 || !rng.random_bool(p_synth) {
        return Ok((sample, false));
    }
    match make_synth_task(&sample.image, sample.context.len(), pipeline, cfg, rng) {
        Ok(task) => {
            let (image, label) = task.target;
            Ok((
                TrainExample {
                    image,
                    label,
                    context: ContextSet::from_entries(task.context)?,
                },
                true,
            ))
        }
        Err(Error::EmptySynthLabel(_)) => Ok((sample, false)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64, f32)> = (0..5)
            .map(|_| (rng.random_range(0.0..32.0), rng.random_range(0.0..32.0), rng.random_range(3.0..9.0), rng.random()))
            .collect();
        let px = (0..32 * 32)
            .map(|i| {
                let (r, c) = ((i / 32) as f64, (i % 32) as f64);
                blobs
                    .iter()
                    .find(|(br, bc, rad, _)| (r - br).powi(2) + (c - bc).powi(2) <= rad * rad)
                    .map_or(0.1, |b| b.3)
            })
            .collect();
        Image::new(32, 32, px).unwrap()
    }

    #[test]
    fn single_segment_label_is_full() {
        let map = superpixel_partition(&Image::filled(8, 8, 0.2), 10.0, &SuperpixelParams::default()).unwrap();
        let (y, id) = sample_synth_label(&map, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(id, 1);
        assert_eq!(y.area(), 64);
    }

    #[test]
    fn segment_choice_is_uniform() {
        let map = SuperpixelMap {
            height: 2,
            width: 2,
            labels: vec![1, 2, 3, 4],
            k: 4,
            lambda: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let (y, id) = sample_synth_label(&map, &mut rng).unwrap();
            assert_eq!(y.pixels()[id as usize - 1], 1.0);
            counts[id as usize - 1] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 / 10_000.0 - 0.25).abs() < 0.02), "{counts:?}");
    }

    #[test]
    fn identity_pipeline_duplicates_the_pair() {
        let x0 = textured(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let task = make_synth_task(&x0, 3, &Pipeline::identity(), &SynthConfig::default(), &mut rng).unwrap();
        assert_eq!(task.context.len(), 3);
        for (x, y) in &task.context {
            assert_eq!(x, &task.target.0);
            assert_eq!(y, &task.target.1);
        }
        let empty = make_synth_task(&x0, 0, &Pipeline::identity(), &SynthConfig::default(), &mut rng).unwrap();
        assert!(empty.context.is_empty());
    }

    #[test]
    fn generated_labels_are_binary_and_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..100 {
            let task = make_synth_task(&textured(i), 1, &Pipeline::synth_task(), &SynthConfig::default(), &mut rng).unwrap();
            let y = &task.target.1;
            assert!(!y.is_empty());
            assert!(y.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn substitution_frequency() {
        let x = textured(5);
        let sample = TrainExample {
            image: x.clone(),
            label: SegMask::empty(32, 32),
            context: ContextSet::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let id = Pipeline::identity();
        let cfg = SynthConfig::default();
        let (_, s0) = maybe_substitute_synthetic(sample.clone(), 0.0, &id, &cfg, &mut rng).unwrap();
        let (_, s1) = maybe_substitute_synthetic(sample.clone(), 1.0, &id, &cfg, &mut rng).unwrap();
        assert!(!s0 && s1);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| maybe_substitute_synthetic(sample.clone(), 0.5, &id, &cfg, &mut rng).unwrap().1)
            .count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.02);
    }
}
