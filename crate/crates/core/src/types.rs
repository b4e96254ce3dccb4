//! Shared raster data model: images, masks, user interactions and the
//! network's input stacks.
//!
//! All rasters are row-major with the origin at the top-left corner and are
//! addressed as `(row, col)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};

/// Default click stamp radius in pixels.
pub const DEFAULT_CLICK_RADIUS: f32 = 1.0;

/// Default binarization threshold for soft predictions.
pub const DEFAULT_THRESHOLD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub row: usize,
    pub col: usize,
}

impl Point {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Single-channel intensity raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        check_len(height, width, pixels.len())?;
        if let Some(v) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::input(format!("image intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image, clamping every value into `[0, 1]`. Non-finite values become 0.
    pub fn from_clamped(height: usize, width: usize, mut pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), height * width, "pixel buffer length");
        for v in &mut pixels {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::from_clamped(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Hard,
    Soft,
}

/// Segmentation raster: hard labels in `{0, 1}` or soft predictions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegMask {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    kind: MaskKind,
}

impl SegMask {
    pub fn hard(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        check_len(height, width, pixels.len())?;
        if let Some(v) = pixels.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::input(format!("hard mask value {v} not in {{0, 1}}")));
        }
        Ok(Self {
            height,
            width,
            pixels,
            kind: MaskKind::Hard,
        })
    }

    pub fn soft(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        check_len(height, width, pixels.len())?;
        if let Some(v) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::input(format!("soft mask value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
            kind: MaskKind::Soft,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
            kind: MaskKind::Hard,
        }
    }

    pub fn from_bitmap(bitmap: &Bitmap) -> Self {
        Self {
            height: bitmap.height,
            width: bitmap.width,
            pixels: bitmap.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            kind: MaskKind::Hard,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// Number of pixels at or above 0.5.
    pub fn area(&self) -> usize {
        self.pixels.iter().filter(|&&v| v >= DEFAULT_THRESHOLD).count()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Foreground bitmap with the `>=` threshold convention.
    pub fn to_bitmap(&self, threshold: f32) -> Bitmap {
        Bitmap {
            height: self.height,
            width: self.width,
            bits: self.pixels.iter().map(|&v| v >= threshold).collect(),
        }
    }
}

/// Boolean raster used for regions, scribbles and intermediate masks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bitmap {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_len(height, width, bits.len())?;
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Point::new(i / w, i % w))
    }

    pub fn and(&self, other: &Bitmap) -> Bitmap {
        self.zip(other, |a, b| a && b)
    }

    pub fn and_not(&self, other: &Bitmap) -> Bitmap {
        self.zip(other, |a, b| a && !b)
    }

    pub fn or(&self, other: &Bitmap) -> Bitmap {
        self.zip(other, |a, b| a || b)
    }

    pub fn not(&self) -> Bitmap {
        Bitmap {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip(&self, other: &Bitmap, f: impl Fn(bool, bool) -> bool) -> Bitmap {
        assert_eq!(self.shape(), other.shape(), "bitmap shapes differ");
        Bitmap {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Inclusive box corners `(r0, c0)`-`(r1, c1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

/// Clicks, scribbles and an optional box for one target image at one step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionState {
    pub height: usize,
    pub width: usize,
    pub positive_clicks: Vec<Point>,
    pub negative_clicks: Vec<Point>,
    pub positive_scribbles: Bitmap,
    pub negative_scribbles: Bitmap,
    pub bbox: Option<BoxPrompt>,
}

impl InteractionState {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            positive_clicks: Vec::new(),
            negative_clicks: Vec::new(),
            positive_scribbles: Bitmap::new(height, width),
            negative_scribbles: Bitmap::new(height, width),
            bbox: None,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn is_empty(&self) -> bool {
        self.positive_clicks.is_empty()
            && self.negative_clicks.is_empty()
            && !self.positive_scribbles.any()
            && !self.negative_scribbles.any()
            && self.bbox.is_none()
    }

    /// Folds another step's interactions into this one. The box is replaced when `other` has one.
    pub fn merge(&mut self, other: &InteractionState) {
        assert_eq!(self.shape(), other.shape(), "interaction shapes differ");
        self.positive_clicks.extend_from_slice(&other.positive_clicks);
        self.negative_clicks.extend_from_slice(&other.negative_clicks);
        self.positive_scribbles = self.positive_scribbles.or(&other.positive_scribbles);
        self.negative_scribbles = self.negative_scribbles.or(&other.negative_scribbles);
        if other.bbox.is_some() {
            self.bbox = other.bbox;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.shape();
        ensure_shape((h, w), self.positive_scribbles.shape())?;
        ensure_shape((h, w), self.negative_scribbles.shape())?;
        for p in self.positive_clicks.iter().chain(&self.negative_clicks) {
            if p.row >= h || p.col >= w {
                return Err(Error::input(format!(
                    "click ({}, {}) outside {h}x{w} raster",
                    p.row, p.col
                )));
            }
        }
        if let Some(b) = self.bbox {
            if b.r0 > b.r1 || b.c0 > b.c1 {
                return Err(Error::input("box corners are not ordered"));
            }
            if b.r1 >= h || b.c1 >= w {
                return Err(Error::input("box corner outside raster"));
            }
        }
        Ok(())
    }
}

pub const PROMPT_CHANNELS: usize = 3;
pub const TARGET_CHANNELS: usize = 5;
pub const CONTEXT_CHANNELS: usize = 2;

/// Three prompt channels: box, positive, negative. Layout `[3][H][W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPrompts {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl EncodedPrompts {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; PROMPT_CHANNELS * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Renders interactions into box / positive / negative intensity channels.
///
/// Clicks are stamped as Euclidean disks of `click_radius`; scribbles are
/// merged into their sign channel with an elementwise max.
pub fn encode_interactions(state: &InteractionState, click_radius: f32) -> Result<EncodedPrompts> {
    state.validate()?;
    if click_radius.is_nan() || click_radius < 0.0 {
        return Err(Error::input("click radius must be non-negative"));
    }
    let (h, w) = state.shape();
    let mut out = EncodedPrompts::zeros(h, w);
    if let Some(b) = state.bbox {
        let ch = out.channel_mut(0);
        for r in b.r0..=b.r1 {
            ch[r * w + b.c0..=r * w + b.c1].fill(1.0);
        }
    }
    for (channel, clicks, scribbles) in [
        (1, &state.positive_clicks, &state.positive_scribbles),
        (2, &state.negative_clicks, &state.negative_scribbles),
    ] {
        let ch = out.channel_mut(channel);
        for p in clicks {
            stamp_disk(ch, h, w, *p, click_radius);
        }
        for (v, &s) in ch.iter_mut().zip(scribbles.bits()) {
            if s {
                *v = 1.0;
            }
        }
    }
    Ok(out)
}

fn stamp_disk(ch: &mut [f32], h: usize, w: usize, center: Point, radius: f32) {
    let reach = radius.floor() as isize;
    let r2 = (radius as f64) * (radius as f64);
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if ((dr * dr + dc * dc) as f64) > r2 {
                continue;
            }
            let r = center.row as isize + dr;
            let c = center.col as isize + dc;
            if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                ch[r as usize * w + c as usize] = 1.0;
            }
        }
    }
}

/// Five input channels for the target stream: image, box, positive, negative,
/// previous prediction. Layout `[5][H][W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetStack {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl TargetStack {
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

pub fn stack_target(
    image: &Image,
    prompts: &EncodedPrompts,
    previous: Option<&SegMask>,
) -> Result<TargetStack> {
    let shape = image.shape();
    ensure_shape(shape, prompts.shape())?;
    if let Some(prev) = previous {
        ensure_shape(shape, prev.shape())?;
    }
    let n = shape.0 * shape.1;
    let mut data = Vec::with_capacity(TARGET_CHANNELS * n);
    data.extend_from_slice(image.pixels());
    data.extend_from_slice(prompts.data());
    match previous {
        Some(prev) => data.extend_from_slice(prev.pixels()),
        None => data.resize(TARGET_CHANNELS * n, 0.0),
    }
    Ok(TargetStack {
        height: shape.0,
        width: shape.1,
        data,
    })
}

/// Ordered set of previously segmented `(image, label)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContextSet {
    entries: Vec<(Image, SegMask)>,
}

impl ContextSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(Image, SegMask)>) -> Result<Self> {
        let mut set = Self::new();
        for (x, y) in entries {
            set.push(x, y)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, image: Image, label: SegMask) -> Result<()> {
        ensure_shape(image.shape(), label.shape())?;
        if let Some((first, _)) = self.entries.first() {
            ensure_shape(first.shape(), image.shape())?;
        }
        self.entries.push((image, label));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Image, SegMask)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Image, SegMask)> {
        self.entries.iter()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.entries.first().map(|(x, _)| x.shape())
    }
}

/// Hard mask with `1` wherever `prediction >= threshold`.
pub fn binarize(prediction: &SegMask, threshold: f32) -> Result<SegMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::input(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(SegMask::from_bitmap(&prediction.to_bitmap(threshold)))
}

fn check_len(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::input("raster must be nonempty"));
    }
    if len != height * width {
        return Err(Error::input(format!(
            "buffer of {len} values does not match {height}x{width}"
        )));
    }
    Ok(())
}
