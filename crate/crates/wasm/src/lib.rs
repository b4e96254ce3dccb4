//! Browser bindings for the static demo page in `www/`.
//!
//! Three operations are exposed: superpixel partitions of an image at a
//! chosen scale, the deterministic prompts the protocols derive from a drawn
//! mask, and in-context prediction on toy tasks with a loaded checkpoint.
//! Every binding is a thin wrapper over a plain Rust function so the logic is
//! testable natively.

use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use ctxseg_core::data::toy::{ToyConfig, ToyFamily};
use ctxseg_core::interaction::{bounding_box, center_click, centerline_scribble};
use ctxseg_core::network::{Checkpoint, Model};
use ctxseg_core::synthetic::{superpixel_partition, SuperpixelParams};
use ctxseg_core::{
    encode_interactions, stack_target, Bitmap, ContextSet, Image, InteractionState, Point, SegMask, DEFAULT_CLICK_RADIUS,
    DEFAULT_THRESHOLD,
};

type Result<T> = std::result::Result<T, ctxseg_core::Error>;

fn js(e: ctxseg_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn bitmap_from_bytes(mask: &[u8], height: usize, width: usize) -> Result<Bitmap> {
    Bitmap::from_bits(height, width, mask.iter().map(|&v| v != 0).collect())
}

fn bytes_from_bitmap(b: &Bitmap) -> Vec<u8> {
    b.bits().iter().map(|&v| v as u8).collect()
}

/// Segment ids of a grayscale image in `[0, 1]` at scale `lambda`.
pub fn superpixel_labels(pixels: &[f32], height: usize, width: usize, lambda: f64) -> Result<Vec<u32>> {
    let image = Image::new(height, width, pixels.to_vec())?;
    Ok(superpixel_partition(&image, lambda, &SuperpixelParams::default())?.labels)
}

/// 1 where a pixel's right or lower neighbour lies in a different segment.
pub fn segment_edges(labels: &[u32], height: usize, width: usize) -> Vec<u8> {
    let mut out = vec![0u8; height * width];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let right = c + 1 < width && labels[i + 1] != labels[i];
            let down = r + 1 < height && labels[i + width] != labels[i];
            out[i] = (right || down) as u8;
        }
    }
    out
}

#[wasm_bindgen(js_name = superpixels)]
pub fn superpixels_js(pixels: &[f32], height: usize, width: usize, lambda: f64) -> std::result::Result<Vec<u32>, JsError> {
    superpixel_labels(pixels, height, width, lambda).map_err(js)
}

#[wasm_bindgen(js_name = segmentEdges)]
pub fn segment_edges_js(labels: &[u32], height: usize, width: usize) -> Vec<u8> {
    segment_edges(labels, height, width)
}

/// Prompts derived from a drawn mask: the centre click, the positive and
/// negative centerline scribbles and the bounding box.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPrompts {
    click: Point,
    positive: Vec<u8>,
    negative: Vec<u8>,
    bbox: [usize; 4],
}

#[wasm_bindgen]
impl MaskPrompts {
    #[wasm_bindgen(getter, js_name = clickRow)]
    pub fn click_row(&self) -> usize {
        self.click.row
    }

    #[wasm_bindgen(getter, js_name = clickCol)]
    pub fn click_col(&self) -> usize {
        self.click.col
    }

    #[wasm_bindgen(getter, js_name = positiveScribble)]
    pub fn positive_scribble(&self) -> Vec<u8> {
        self.positive.clone()
    }

    #[wasm_bindgen(getter, js_name = negativeScribble)]
    pub fn negative_scribble(&self) -> Vec<u8> {
        self.negative.clone()
    }

    /// `[r0, c0, r1, c1]`, inclusive.
    #[wasm_bindgen(getter, js_name = boundingBox)]
    pub fn bounding_box(&self) -> Vec<usize> {
        self.bbox.to_vec()
    }
}

pub fn mask_prompts(mask: &[u8], height: usize, width: usize) -> Result<MaskPrompts> {
    let fg = bitmap_from_bytes(mask, height, width)?;
    let click = center_click(&fg)?;
    let positive = centerline_scribble::<ChaCha8Rng>(&fg, None, None)?;
    let bg = fg.not();
    let negative = if bg.any() {
        centerline_scribble::<ChaCha8Rng>(&bg, None, None)?
    } else {
        Bitmap::new(height, width)
    };
    let b = bounding_box(&fg).expect("non-empty mask has a box");
    Ok(MaskPrompts {
        click,
        positive: bytes_from_bitmap(&positive),
        negative: bytes_from_bitmap(&negative),
        bbox: [b.r0, b.c0, b.r1, b.c1],
    })
}

#[wasm_bindgen(js_name = maskPrompts)]
pub fn mask_prompts_js(mask: &[u8], height: usize, width: usize) -> std::result::Result<MaskPrompts, JsError> {
    mask_prompts(mask, height, width).map_err(js)
}

/// A toy task family plus an optional model, for in-context prediction.
#[wasm_bindgen]
pub struct ToyDemo {
    cfg: ToyConfig,
    family: ToyFamily,
    model: Option<Model>,
}

impl ToyDemo {
    pub fn create(seed: u64, resolution: usize) -> Self {
        let cfg = ToyConfig {
            resolution,
            ..ToyConfig::default()
        };
        Self {
            family: ToyFamily::new(seed, &cfg),
            cfg,
            model: None,
        }
    }

    /// Replaces the model. The toy resolution follows the model's.
    pub fn set_checkpoint(&mut self, bytes: &[u8]) -> Result<()> {
        let model = Model::new(Checkpoint::read_from(bytes)?.params)?;
        let resolution = model.config().resolution;
        if resolution != self.cfg.resolution {
            *self = Self::create(self.family.seed, resolution);
        }
        self.model = Some(model);
        Ok(())
    }

    pub fn example(&self, index: u64) -> (Image, SegMask) {
        self.family.example(index, &self.cfg)
    }

    /// Probabilities for example 0 of the family given examples
    /// `1..=context_size` as context and the listed clicks as
    /// `[row, col, row, col, ...]`.
    pub fn predict_target(&self, context_size: usize, positive: &[u32], negative: &[u32]) -> Result<Vec<f32>> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| ctxseg_core::Error::Input("load a checkpoint first".into()))?;
        let (image, _) = self.example(0);
        let (h, w) = image.shape();
        let context = ContextSet::from_entries((1..=context_size as u64).map(|i| self.example(i)).collect())?;
        let points = |flat: &[u32]| flat.chunks_exact(2).map(|p| Point::new(p[0] as usize, p[1] as usize)).collect();
        let state = InteractionState {
            positive_clicks: points(positive),
            negative_clicks: points(negative),
            ..InteractionState::empty(h, w)
        };
        let prompts = encode_interactions(&state, DEFAULT_CLICK_RADIUS)?;
        let target = stack_target(&image, &prompts, None)?;
        Ok(model.predict(&target, &context)?.probs.pixels().to_vec())
    }
}

#[wasm_bindgen]
impl ToyDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, resolution: usize) -> ToyDemo {
        Self::create(seed as u64, resolution)
    }

    /// Switches to another task family, keeping the loaded model.
    #[wasm_bindgen(js_name = setFamily)]
    pub fn set_family(&mut self, seed: u32) {
        self.family = ToyFamily::new(seed as u64, &self.cfg);
    }

    #[wasm_bindgen(getter)]
    pub fn resolution(&self) -> usize {
        self.cfg.resolution
    }

    #[wasm_bindgen(getter, js_name = hasModel)]
    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    #[wasm_bindgen(js_name = loadCheckpoint)]
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> std::result::Result<(), JsError> {
        self.set_checkpoint(bytes).map_err(js)
    }

    pub fn image(&self, index: u32) -> Vec<f32> {
        self.example(index as u64).0.into_pixels()
    }

    pub fn label(&self, index: u32) -> Vec<u8> {
        bytes_from_bitmap(&self.example(index as u64).1.to_bitmap(DEFAULT_THRESHOLD))
    }

    pub fn predict(&self, context_size: usize, positive: &[u32], negative: &[u32]) -> std::result::Result<Vec<f32>, JsError> {
        self.predict_target(context_size, positive, negative).map_err(js)
    }

    /// Dice of the thresholded probabilities against the target's label.
    pub fn dice(&self, probs: &[f32]) -> std::result::Result<f64, JsError> {
        let (_, label) = self.example(0);
        let (h, w) = label.shape();
        let pred = SegMask::soft(h, w, probs.to_vec()).map_err(js)?;
        ctxseg_core::metrics::dice_score(&pred, &label).map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctxseg_core::network::{ModelConfig, ModelParams};
    use rand_chacha::rand_core::SeedableRng;

    fn disc(h: usize, w: usize) -> Vec<u8> {
        (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as f64 - 10.0, (i % w) as f64 - 12.0);
                (r * r + c * c <= 36.0) as u8
            })
            .collect()
    }

    #[test]
    fn superpixels_cover_the_image_and_coarsen_with_scale() {
        let demo = ToyDemo::create(3, 32);
        let pixels = demo.image(0);
        let fine = superpixel_labels(&pixels, 32, 32, 10.0).unwrap();
        let coarse = superpixel_labels(&pixels, 32, 32, 2000.0).unwrap();
        assert_eq!(fine.len(), 1024);
        let count = |l: &[u32]| *l.iter().max().unwrap();
        assert!(count(&coarse) <= count(&fine));
        assert!(fine.iter().all(|&l| l >= 1));
        assert_eq!(superpixel_labels(&pixels, 32, 32, 10.0).unwrap(), fine);
    }

    #[test]
    fn edges_mark_label_changes_only() {
        let labels = [1, 1, 2, 1, 1, 2];
        assert_eq!(segment_edges(&labels, 2, 3), vec![0, 1, 0, 0, 1, 0]);
        assert_eq!(segment_edges(&[4; 6], 2, 3), vec![0; 6]);
    }

    #[test]
    fn prompts_respect_the_drawn_mask() {
        let mask = disc(24, 28);
        let p = mask_prompts(&mask, 24, 28).unwrap();
        assert_eq!((p.click_row(), p.click_col()), (10, 12));
        assert!(p.positive.contains(&1));
        assert!(p.positive.iter().zip(&mask).all(|(&s, &m)| s == 0 || m == 1));
        assert!(p.negative.contains(&1));
        assert!(p.negative.iter().zip(&mask).all(|(&s, &m)| s == 0 || m == 0));
        assert_eq!(p.bbox, [4, 6, 16, 18]);
        assert!(mask_prompts(&vec![0; 24 * 28], 24, 28).is_err());
        assert!(mask_prompts(&mask, 24, 27).is_err());
    }

    #[test]
    fn prediction_needs_a_checkpoint_and_adopts_its_resolution() {
        let mut demo = ToyDemo::create(9, 64);
        assert!(demo.predict_target(2, &[], &[]).is_err());
        let cfg = ModelConfig {
            resolution: 32,
            features: 8,
            encoder_stages: 2,
            decoder_stages: 1,
            ..ModelConfig::desk()
        };
        let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut bytes = Vec::new();
        Checkpoint::new(params).write_to(&mut bytes).unwrap();
        demo.set_checkpoint(&bytes).unwrap();
        assert_eq!(demo.resolution(), 32);
        let probs = demo.predict_target(3, &[16, 16], &[2, 2]).unwrap();
        assert_eq!(probs.len(), 32 * 32);
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(demo.predict_target(3, &[16, 16], &[2, 2]).unwrap(), probs);
        assert_eq!(demo.label(0).len(), 1024);
    }
}
