//! Augmentation pipelines for image/label pairs.
//!
//! Geometric transforms warp image and label together; the label is
//! interpolated bilinearly and re-thresholded at 0.5. Photometric transforms
//! touch the image only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::filters::{adjust_sharpness, gaussian_blur, sample_bilinear, sobel_magnitude};
use crate::error::{ensure_shape, Result};
use crate::types::{Image, SegMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Rotation in degrees, translation as a fraction of the side length
    /// (sign drawn separately), isotropic scale.
    Affine {
        p: f64,
        degrees: [f64; 2],
        translate: [f64; 2],
        scale: [f64; 2],
    },
    /// `x ← contrast · x + brightness`.
    BrightnessContrast {
        p: f64,
        brightness: [f64; 2],
        contrast: [f64; 2],
    },
    /// Uniform noise displacement smoothed by a Gaussian of width `sigma`
    /// pixels and scaled by `alpha` in normalized `[-1, 1]` coordinates.
    Elastic { p: f64, alpha: [f64; 2], sigma: [f64; 2] },
    Sharpness { p: f64, factor: f64 },
    GaussianBlur { p: f64, kernel_size: usize, sigma: [f64; 2] },
    GaussianNoise { p: f64, mean: [f64; 2], std: [f64; 2] },
    HorizontalFlip { p: f64 },
    VerticalFlip { p: f64 },
    /// Replaces the label by its Sobel edge map, binarized as magnitude > 0.
    SobelEdgesLabel { p: f64 },
    FlipIntensities { p: f64 },
}

impl Transform {
    pub fn probability(&self) -> f64 {
        match *self {
            Transform::Affine { p, .. }
            | Transform::BrightnessContrast { p, .. }
            | Transform::Elastic { p, .. }
            | Transform::Sharpness { p, .. }
            | Transform::GaussianBlur { p, .. }
            | Transform::GaussianNoise { p, .. }
            | Transform::HorizontalFlip { p }
            | Transform::VerticalFlip { p }
            | Transform::SobelEdgesLabel { p }
            | Transform::FlipIntensities { p } => p,
        }
    }

    fn set_probability(&mut self, value: f64) {
        match self {
            Transform::Affine { p, .. }
            | Transform::BrightnessContrast { p, .. }
            | Transform::Elastic { p, .. }
            | Transform::Sharpness { p, .. }
            | Transform::GaussianBlur { p, .. }
            | Transform::GaussianNoise { p, .. }
            | Transform::HorizontalFlip { p }
            | Transform::VerticalFlip { p }
            | Transform::SobelEdgesLabel { p }
            | Transform::FlipIntensities { p } => *p = value,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub transforms: Vec<Transform>,
}

impl Pipeline {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Same transforms with every probability set to `p`.
    pub fn with_probability(&self, p: f64) -> Self {
        let mut out = self.clone();
        out.transforms.iter_mut().for_each(|t| t.set_probability(p));
        out
    }

    /// Augmentations for synthetic superpixel tasks.
    pub fn synth_task() -> Self {
        Self {
            transforms: vec![
                Transform::Affine {
                    p: 0.8,
                    degrees: [-25.0, 25.0],
                    translate: [0.0, 0.2],
                    scale: [0.9, 1.5],
                },
                Transform::BrightnessContrast {
                    p: 0.5,
                    brightness: [-0.1, 0.1],
                    contrast: [0.5, 1.5],
                },
                Transform::Elastic {
                    p: 0.8,
                    alpha: [1.0, 10.0],
                    sigma: [8.0, 15.0],
                },
                Transform::Sharpness { p: 0.5, factor: 5.0 },
                Transform::GaussianBlur {
                    p: 0.5,
                    kernel_size: 5,
                    sigma: [0.1, 1.5],
                },
                Transform::GaussianNoise {
                    p: 0.5,
                    mean: [0.0, 0.05],
                    std: [0.0, 0.05],
                },
                Transform::HorizontalFlip { p: 0.5 },
                Transform::VerticalFlip { p: 0.5 },
            ],
        }
    }

    /// Augmentations drawn independently for every example within a task.
    pub fn within_task() -> Self {
        Self {
            transforms: vec![
                Transform::Affine {
                    p: 0.25,
                    degrees: [-25.0, 25.0],
                    translate: [0.0, 0.1],
                    scale: [0.9, 1.1],
                },
                Transform::BrightnessContrast {
                    p: 0.25,
                    brightness: [-0.1, 0.1],
                    contrast: [0.5, 1.5],
                },
                Transform::Elastic {
                    p: 0.8,
                    alpha: [1.0, 2.5],
                    sigma: [7.0, 9.0],
                },
                Transform::Sharpness { p: 0.25, factor: 5.0 },
                Transform::GaussianBlur {
                    p: 0.25,
                    kernel_size: 5,
                    sigma: [0.1, 1.0],
                },
                Transform::GaussianNoise {
                    p: 0.25,
                    mean: [0.0, 0.05],
                    std: [0.0, 0.05],
                },
            ],
        }
    }

    /// Augmentations drawn once and applied to a whole task.
    pub fn task_level() -> Self {
        Self {
            transforms: vec![
                Transform::Affine {
                    p: 0.5,
                    degrees: [0.0, 360.0],
                    translate: [0.0, 0.2],
                    scale: [0.8, 1.1],
                },
                Transform::BrightnessContrast {
                    p: 0.5,
                    brightness: [-0.1, 0.1],
                    contrast: [0.8, 1.2],
                },
                Transform::Elastic {
                    p: 0.5,
                    alpha: [1.0, 2.0],
                    sigma: [6.0, 8.0],
                },
                Transform::Sharpness { p: 0.5, factor: 5.0 },
                Transform::GaussianBlur {
                    p: 0.5,
                    kernel_size: 5,
                    sigma: [0.1, 1.1],
                },
                Transform::GaussianNoise {
                    p: 0.5,
                    mean: [0.0, 0.05],
                    std: [0.0, 0.05],
                },
                Transform::HorizontalFlip { p: 0.5 },
                Transform::VerticalFlip { p: 0.5 },
                Transform::SobelEdgesLabel { p: 0.5 },
                Transform::FlipIntensities { p: 0.5 },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSpec {
    pub within_task: Pipeline,
    pub task_level: Pipeline,
    pub synth_task: Pipeline,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            within_task: Pipeline::within_task(),
            task_level: Pipeline::task_level(),
            synth_task: Pipeline::synth_task(),
        }
    }
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        Self {
            within_task: Pipeline::identity(),
            task_level: Pipeline::identity(),
            synth_task: Pipeline::identity(),
        }
    }
}

/// A transform with all of its random parameters fixed.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampled {
    Affine {
        degrees: f64,
        translate: (f64, f64),
        scale: f64,
    },
    BrightnessContrast {
        brightness: f64,
        contrast: f64,
    },
    Elastic {
        alpha: f64,
        sigma: f64,
        seed: u64,
    },
    Sharpness(f64),
    GaussianBlur {
        kernel_size: usize,
        sigma: f64,
    },
    GaussianNoise {
        mean: f64,
        std: f64,
        seed: u64,
    },
    HorizontalFlip,
    VerticalFlip,
    SobelEdgesLabel,
    FlipIntensities,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Draws which transforms fire and their parameters.
pub fn sample_pipeline<R: Rng + ?Sized>(pipeline: &Pipeline, rng: &mut R) -> Vec<Sampled> {
    let mut out = Vec::new();
    for t in &pipeline.transforms {
        let p = t.probability();
        if p <= 0.0 || !rng.random_bool(p.min(1.0)) {
            continue;
        }
        out.push(match *t {
            Transform::Affine {
                degrees,
                translate,
                scale,
                ..
            } => {
                let mut shift = || {
                    let m = uniform(rng, translate);
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                };
                let translate = (shift(), shift());
                Sampled::Affine {
                    degrees: uniform(rng, degrees),
                    translate,
                    scale: uniform(rng, scale),
                }
            }
            Transform::BrightnessContrast {
                brightness, contrast, ..
            } => Sampled::BrightnessContrast {
                brightness: uniform(rng, brightness),
                contrast: uniform(rng, contrast),
            },
            Transform::Elastic { alpha, sigma, .. } => Sampled::Elastic {
                alpha: uniform(rng, alpha),
                sigma: uniform(rng, sigma),
                seed: rng.random(),
            },
            Transform::Sharpness { factor, .. } => Sampled::Sharpness(factor),
            Transform::GaussianBlur { kernel_size, sigma, .. } => Sampled::GaussianBlur {
                kernel_size,
                sigma: uniform(rng, sigma),
            },
            Transform::GaussianNoise { mean, std, .. } => Sampled::GaussianNoise {
                mean: uniform(rng, mean),
                std: uniform(rng, std),
                seed: rng.random(),
            },
            Transform::HorizontalFlip { .. } => Sampled::HorizontalFlip,
            Transform::VerticalFlip { .. } => Sampled::VerticalFlip,
            Transform::SobelEdgesLabel { .. } => Sampled::SobelEdgesLabel,
            Transform::FlipIntensities { .. } => Sampled::FlipIntensities,
        });
    }
    out
}

/// Applies already-sampled transforms in order.
pub fn apply_sampled(sampled: &[Sampled], image: &Image, label: &SegMask) -> Result<(Image, SegMask)> {
    ensure_shape(image.shape(), label.shape())?;
    let (h, w) = image.shape();
    let mut x = image.pixels().to_vec();
    let mut y = label.pixels().to_vec();
    let mut warped = false;
    for s in sampled {
        match *s {
            Sampled::Affine {
                degrees,
                translate,
                scale,
            } => {
                let map = affine_map(h, w, degrees, translate, scale);
                x = warp(&x, h, w, &map);
                y = warp(&y, h, w, &map);
                warped = true;
            }
            Sampled::Elastic { alpha, sigma, seed } => {
                let map = elastic_map(h, w, alpha, sigma, seed);
                x = warp(&x, h, w, &map);
                y = warp(&y, h, w, &map);
                warped = true;
            }
            Sampled::BrightnessContrast { brightness, contrast } => {
                for v in &mut x {
                    *v = (contrast as f32 * *v + brightness as f32).clamp(0.0, 1.0);
                }
            }
            Sampled::Sharpness(factor) => x = adjust_sharpness(&x, h, w, factor as f32),
            Sampled::GaussianBlur { kernel_size, sigma } => {
                x = gaussian_blur(&x, h, w, sigma, kernel_size / 2);
            }
            Sampled::GaussianNoise { mean, std, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(mean, std.max(0.0)).expect("finite noise parameters");
                for v in &mut x {
                    *v = (*v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
                }
            }
            Sampled::HorizontalFlip => {
                flip_horizontal(&mut x, h, w);
                flip_horizontal(&mut y, h, w);
            }
            Sampled::VerticalFlip => {
                flip_vertical(&mut x, h, w);
                flip_vertical(&mut y, h, w);
            }
            Sampled::SobelEdgesLabel => {
                let hard: Vec<f32> = y.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
                y = sobel_magnitude(&hard, h, w)
                    .into_iter()
                    .map(|m| if m > 0.0 { 1.0 } else { 0.0 })
                    .collect();
            }
            Sampled::FlipIntensities => x.iter_mut().for_each(|v| *v = 1.0 - *v),
        }
    }
    if warped {
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    let y: Vec<f32> = y.into_iter().map(|v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
    Ok((Image::from_clamped(h, w, x), SegMask::hard(h, w, y)?))
}

/// Samples the pipeline and applies it to one pair.
pub fn apply_pipeline<R: Rng + ?Sized>(
    image: &Image,
    label: &SegMask,
    pipeline: &Pipeline,
    rng: &mut R,
) -> Result<(Image, SegMask)> {
    let sampled = sample_pipeline(pipeline, rng);
    apply_sampled(&sampled, image, label)
}

/// For each output pixel, the source `(y, x)` coordinate to read.
type SourceMap = Vec<(f64, f64)>;

fn affine_map(h: usize, w: usize, degrees: f64, translate: (f64, f64), scale: f64) -> SourceMap {
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (ty, tx) = (translate.0 * h as f64, translate.1 * w as f64);
    let theta = degrees.to_radians();
    let (s, c) = theta.sin_cos();
    let mut map = Vec::with_capacity(h * w);
    for r in 0..h {
        for col in 0..w {
            // Inverse of: rotate and scale about the centre, then translate.
            let dy = r as f64 - cy - ty;
            let dx = col as f64 - cx - tx;
            let sx = (c * dx + s * dy) / scale;
            let sy = (-s * dx + c * dy) / scale;
            map.push((sy + cy, sx + cx));
        }
    }
    map
}

fn elastic_map(h: usize, w: usize, alpha: f64, sigma: f64, seed: u64) -> SourceMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let mut field = |n: usize| -> Vec<f32> {
        let noise: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        gaussian_blur(&noise, h, w, sigma, radius)
    };
    let fy = field(h * w);
    let fx = field(h * w);
    let mut map = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let dy = alpha * fy[i] as f64 * (h as f64 - 1.0) / 2.0;
            let dx = alpha * fx[i] as f64 * (w as f64 - 1.0) / 2.0;
            map.push((r as f64 + dy, c as f64 + dx));
        }
    }
    map
}

fn warp(plane: &[f32], h: usize, w: usize, map: &SourceMap) -> Vec<f32> {
    map.iter().map(|&(y, x)| sample_bilinear(plane, h, w, y, x)).collect()
}

fn flip_horizontal(plane: &mut [f32], h: usize, w: usize) {
    for r in 0..h {
        plane[r * w..(r + 1) * w].reverse();
    }
}

fn flip_vertical(plane: &mut [f32], h: usize, w: usize) {
    for r in 0..h / 2 {
        let (top, bottom) = plane.split_at_mut((h - 1 - r) * w);
        top[r * w..(r + 1) * w].swap_with_slice(&mut bottom[..w]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(seed: u64) -> (Image, SegMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Image::new(24, 24, (0..576).map(|_| rng.random::<f32>()).collect()).unwrap();
        let lab = SegMask::hard(
            24,
            24,
            (0..576)
                .map(|i| {
                    let (r, c) = (i / 24, i % 24);
                    if (6..16).contains(&r) && (4..14).contains(&c) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap();
        (img, lab)
    }

    #[test]
    fn zero_probability_is_identity() {
        let (x, y) = pair(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in [Pipeline::synth_task(), Pipeline::within_task(), Pipeline::task_level()] {
            let (x2, y2) = apply_pipeline(&x, &y, &p.with_probability(0.0), &mut rng).unwrap();
            assert_eq!((x2, y2), (x.clone(), y.clone()));
        }
    }

    #[test]
    fn flips_are_involutions() {
        let (x, y) = pair(3);
        for f in [Sampled::HorizontalFlip, Sampled::VerticalFlip] {
            let twice = [f.clone(), f];
            assert_eq!(apply_sampled(&twice, &x, &y).unwrap(), (x.clone(), y.clone()));
        }
        let (xf, _) = apply_sampled(&[Sampled::HorizontalFlip], &x, &y).unwrap();
        assert_eq!(xf.get(3, 0), x.get(3, 23));
    }

    #[test]
    fn identity_affine_is_exact() {
        let (x, y) = pair(4);
        let s = Sampled::Affine {
            degrees: 0.0,
            translate: (0.0, 0.0),
            scale: 1.0,
        };
        assert_eq!(apply_sampled(&[s], &x, &y).unwrap(), (x, y));
    }

    #[test]
    fn quarter_turn_moves_label() {
        let (x, y) = pair(5);
        let s = Sampled::Affine {
            degrees: 90.0,
            translate: (0.0, 0.0),
            scale: 1.0,
        };
        let (_, y2) = apply_sampled(&[s], &x, &y).unwrap();
        assert_eq!(y2.area(), y.area());
        assert_ne!(y2, y);
    }

    #[test]
    fn outputs_stay_in_range() {
        let (x, y) = pair(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [Pipeline::synth_task(), Pipeline::task_level()] {
            let all = p.with_probability(1.0);
            for _ in 0..30 {
                let (x2, y2) = apply_pipeline(&x, &y, &all, &mut rng).unwrap();
                assert!(x2.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
                assert!(y2.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    #[test]
    fn sobel_label_is_outline() {
        let (x, y) = pair(8);
        let (_, e) = apply_sampled(&[Sampled::SobelEdgesLabel], &x, &y).unwrap();
        // Interior pixels far from the edge are off, pixels at the edge are on.
        assert_eq!(e.get(10, 8), 0.0);
        assert_eq!(e.get(6, 8), 1.0);
        assert_eq!(e.get(5, 8), 1.0);
    }
}
