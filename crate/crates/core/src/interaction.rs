//! Simulated user: initial prompts drawn from the ground truth, corrections
//! drawn from the error region, and the deterministic center-click and
//! centerline-scribble protocols used for evaluation.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::morph::{
    connected_walk, deepest_point, label_components, largest_component, line_pixels, medial_axis,
    Connectivity,
};
use crate::types::{Bitmap, BoxPrompt, InteractionState, Point, SegMask, DEFAULT_THRESHOLD};

/// False-positive and false-negative pixels of a binarized prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorRegion {
    pub false_positive: Bitmap,
    pub false_negative: Bitmap,
}

impl ErrorRegion {
    pub fn is_empty(&self) -> bool {
        !self.false_positive.any() && !self.false_negative.any()
    }
}

pub fn error_region(truth: &SegMask, prediction: &SegMask, threshold: f32) -> Result<ErrorRegion> {
    ensure_shape(truth.shape(), prediction.shape())?;
    let t = truth.to_bitmap(DEFAULT_THRESHOLD);
    let p = prediction.to_bitmap(threshold);
    Ok(ErrorRegion {
        false_positive: p.and_not(&t),
        false_negative: t.and_not(&p),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

/// Which interaction kinds are drawn together in the first step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptCombo {
    ClicksOnly,
    ScribblesOnly,
    BoxClicks,
    BoxScribbles,
    ClicksScribbles,
    BoxOnly,
}

impl PromptCombo {
    fn has_box(self) -> bool {
        matches!(
            self,
            PromptCombo::BoxClicks | PromptCombo::BoxScribbles | PromptCombo::BoxOnly
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickPlacement {
    /// Uniform over the region.
    Random,
    /// First click at the deepest point of the largest component.
    Center,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScribbleKind {
    Centerline,
    /// Random chord between two region pixels, clipped to the region.
    Line,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionKind {
    Click,
    Scribble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSampleConfig {
    pub initial_positive: CountRange,
    pub initial_negative: CountRange,
    pub corrections: CountRange,
    pub combos: Vec<(PromptCombo, f64)>,
    pub correction_kinds: Vec<(CorrectionKind, f64)>,
    pub scribble_kinds: Vec<(ScribbleKind, f64)>,
    pub click_placement: ClickPlacement,
    pub box_jitter: usize,
    pub scribble_max_pixels: usize,
    pub seed: u64,
}

impl Default for PromptSampleConfig {
    fn default() -> Self {
        Self::for_resolution(128)
    }
}

impl PromptSampleConfig {
    /// Training defaults with the box jitter scaled from 3 px at 128.
    pub fn for_resolution(resolution: usize) -> Self {
        Self {
            initial_positive: CountRange::new(1, 3),
            initial_negative: CountRange::new(0, 3),
            corrections: CountRange::new(1, 3),
            combos: vec![
                (PromptCombo::ClicksOnly, 1.0),
                (PromptCombo::ScribblesOnly, 1.0),
                (PromptCombo::BoxClicks, 1.0),
                (PromptCombo::BoxScribbles, 1.0),
                (PromptCombo::ClicksScribbles, 1.0),
            ],
            correction_kinds: vec![(CorrectionKind::Click, 1.0), (CorrectionKind::Scribble, 1.0)],
            scribble_kinds: vec![(ScribbleKind::Centerline, 1.0), (ScribbleKind::Line, 1.0)],
            click_placement: ClickPlacement::Random,
            box_jitter: ((3 * resolution) as f64 / 128.0).round() as usize,
            scribble_max_pixels: resolution / 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.initial_positive, self.initial_negative, self.corrections] {
            if r.min > r.max {
                return Err(Error::Config(format!("count range {}..{} is empty", r.min, r.max)));
            }
        }
        check_weights(self.combos.iter().map(|c| c.1), "combos")?;
        check_weights(self.correction_kinds.iter().map(|c| c.1), "correction_kinds")?;
        check_weights(self.scribble_kinds.iter().map(|c| c.1), "scribble_kinds")?;
        Ok(())
    }
}

fn check_weights(weights: impl Iterator<Item = f64>, name: &str) -> Result<()> {
    let mut total = 0.0;
    for w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Config(format!("{name}: weights must be non-negative")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::Config(format!("{name}: at least one positive weight required")));
    }
    Ok(())
}

fn pick_weighted<T: Copy, R: Rng + ?Sized>(items: &[(T, f64)], rng: &mut R) -> T {
    let total: f64 = items.iter().map(|i| i.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(item, w) in items {
        if u < w {
            return item;
        }
        u -= w;
    }
    items.iter().rev().find(|i| i.1 > 0.0).expect("validated weights").0
}

/// Deepest pixel of the largest 4-connected component.
pub fn center_click(mask: &Bitmap) -> Result<Point> {
    let component = largest_component(mask).ok_or(Error::NoClickAvailable)?;
    deepest_point(&component).ok_or(Error::NoClickAvailable)
}

/// Polarity of a simulated correction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

/// Picks the error side whose largest component is bigger (ties go to the
/// false negatives) and returns that component.
fn dominant_error_component(error: &ErrorRegion) -> Result<(Sign, Bitmap)> {
    let fn_comp = largest_component(&error.false_negative);
    let fp_comp = largest_component(&error.false_positive);
    match (fn_comp, fp_comp) {
        (None, None) => Err(Error::NoCorrectionNeeded),
        (Some(f), None) => Ok((Sign::Positive, f)),
        (None, Some(p)) => Ok((Sign::Negative, p)),
        (Some(f), Some(p)) => {
            if f.count() >= p.count() {
                Ok((Sign::Positive, f))
            } else {
                Ok((Sign::Negative, p))
            }
        }
    }
}

pub fn center_correction_click(error: &ErrorRegion) -> Result<(Sign, Point)> {
    let (sign, component) = dominant_error_component(error)?;
    Ok((sign, center_click(&component)?))
}

/// Medial axis of the largest component, optionally trimmed to a contiguous
/// run of at most `max_pixels`. With a `warp` rng the run starts at a random
/// axis pixel and each pixel is jittered by up to one pixel, staying inside
/// the mask.
pub fn centerline_scribble<R: Rng + ?Sized>(
    mask: &Bitmap,
    max_pixels: Option<usize>,
    warp: Option<&mut R>,
) -> Result<Bitmap> {
    let component = largest_component(mask).ok_or(Error::NoScribbleAvailable)?;
    let axis = medial_axis(&component);
    let (h, w) = mask.shape();
    let Some(limit) = max_pixels else {
        return Ok(match warp {
            Some(rng) => jitter_inside(&axis, &component, rng),
            None => axis,
        });
    };
    let deepest = deepest_point(&component).ok_or(Error::NoScribbleAvailable)?;
    let start = match &warp {
        Some(_) => None,
        None => Some(deepest),
    };
    let (start, rng) = match (start, warp) {
        (Some(s), _) => (s, None),
        (None, Some(rng)) => {
            let pts: Vec<Point> = axis.points().collect();
            (*pts.choose(rng).unwrap_or(&deepest), Some(rng))
        }
        (None, None) => unreachable!(),
    };
    let mut out = Bitmap::new(h, w);
    for p in connected_walk(&axis, start, limit.max(1)) {
        out.set(p.row, p.col, true);
    }
    Ok(match rng {
        Some(rng) => jitter_inside(&out, &component, rng),
        None => out,
    })
}

fn jitter_inside<R: Rng + ?Sized>(scribble: &Bitmap, region: &Bitmap, rng: &mut R) -> Bitmap {
    let (h, w) = scribble.shape();
    let mut out = Bitmap::new(h, w);
    for p in scribble.points() {
        let r = p.row as isize + rng.random_range(-1i64..=1) as isize;
        let c = p.col as isize + rng.random_range(-1i64..=1) as isize;
        let moved = r >= 0 && c >= 0 && r < h as isize && c < w as isize && region.get(r as usize, c as usize);
        if moved {
            out.set(r as usize, c as usize, true);
        } else {
            out.set(p.row, p.col, true);
        }
    }
    out
}

/// Random chord through the region: a segment between two random region
/// pixels, keeping only the pixels that fall inside the region.
pub fn line_scribble<R: Rng + ?Sized>(region: &Bitmap, max_pixels: usize, rng: &mut R) -> Result<Bitmap> {
    let pts: Vec<Point> = region.points().collect();
    let a = *pts.choose(rng).ok_or(Error::NoScribbleAvailable)?;
    let b = *pts.choose(rng).ok_or(Error::NoScribbleAvailable)?;
    let (h, w) = region.shape();
    let mut out = Bitmap::new(h, w);
    let mut kept = 0;
    for p in line_pixels(a, b) {
        if region.get(p.row, p.col) {
            out.set(p.row, p.col, true);
            kept += 1;
            if kept >= max_pixels.max(1) {
                break;
            }
        }
    }
    Ok(out)
}

fn random_point<R: Rng + ?Sized>(region: &Bitmap, rng: &mut R) -> Option<Point> {
    let n = region.count();
    if n == 0 {
        return None;
    }
    let k = rng.random_range(0..n);
    region.points().nth(k)
}

fn scribble_in<R: Rng + ?Sized>(region: &Bitmap, cfg: &PromptSampleConfig, rng: &mut R) -> Result<Bitmap> {
    match pick_weighted(&cfg.scribble_kinds, rng) {
        ScribbleKind::Centerline => centerline_scribble(region, Some(cfg.scribble_max_pixels), Some(rng)),
        ScribbleKind::Line => line_scribble(region, cfg.scribble_max_pixels, rng),
    }
}

/// Tight bounding box of the foreground.
pub fn bounding_box(mask: &Bitmap) -> Option<BoxPrompt> {
    let mut b: Option<BoxPrompt> = None;
    for p in mask.points() {
        b = Some(match b {
            None => BoxPrompt {
                r0: p.row,
                c0: p.col,
                r1: p.row,
                c1: p.col,
            },
            Some(b) => BoxPrompt {
                r0: b.r0.min(p.row),
                c0: b.c0.min(p.col),
                r1: b.r1.max(p.row),
                c1: b.c1.max(p.col),
            },
        });
    }
    b
}

fn jitter_box<R: Rng + ?Sized>(b: BoxPrompt, jitter: usize, h: usize, w: usize, rng: &mut R) -> BoxPrompt {
    if jitter == 0 {
        return b;
    }
    let j = jitter as isize;
    let mut move_by = |v: usize, limit: usize| {
        (v as isize + rng.random_range(-(j as i64)..=j as i64) as isize).clamp(0, limit as isize - 1) as usize
    };
    let (r0, r1) = (move_by(b.r0, h), move_by(b.r1, h));
    let (c0, c1) = (move_by(b.c0, w), move_by(b.c1, w));
    BoxPrompt {
        r0: r0.min(r1),
        r1: r0.max(r1),
        c0: c0.min(c1),
        c1: c0.max(c1),
    }
}

/// First-step interactions simulated from the ground truth alone.
pub fn initial_prompts<R: Rng + ?Sized>(
    truth: &SegMask,
    cfg: &PromptSampleConfig,
    rng: &mut R,
) -> Result<InteractionState> {
    let fg = truth.to_bitmap(DEFAULT_THRESHOLD);
    if !fg.any() {
        return Err(Error::input("initial prompts need a nonempty ground truth"));
    }
    let bg = fg.not();
    let (h, w) = truth.shape();
    let mut state = InteractionState::empty(h, w);
    let combo = pick_weighted(&cfg.combos, rng);
    if combo.has_box() {
        let tight = bounding_box(&fg).expect("nonempty");
        state.bbox = Some(jitter_box(tight, cfg.box_jitter, h, w, rng));
    }
    if combo == PromptCombo::BoxOnly {
        return Ok(state);
    }
    let n_pos = cfg.initial_positive.sample(rng);
    let n_neg = cfg.initial_negative.sample(rng);
    for (count, region, sign) in [(n_pos, &fg, Sign::Positive), (n_neg, &bg, Sign::Negative)] {
        if !region.any() {
            continue;
        }
        for i in 0..count {
            let use_click = match combo {
                PromptCombo::ClicksOnly | PromptCombo::BoxClicks => true,
                PromptCombo::ScribblesOnly | PromptCombo::BoxScribbles => false,
                _ => rng.random_bool(0.5),
            };
            if use_click {
                let p = match cfg.click_placement {
                    ClickPlacement::Center if i == 0 => center_click(region)?,
                    _ => random_point(region, rng).expect("nonempty region"),
                };
                match sign {
                    Sign::Positive => state.positive_clicks.push(p),
                    Sign::Negative => state.negative_clicks.push(p),
                }
            } else {
                let s = scribble_in(region, cfg, rng)?;
                let target = match sign {
                    Sign::Positive => &mut state.positive_scribbles,
                    Sign::Negative => &mut state.negative_scribbles,
                };
                *target = target.or(&s);
            }
        }
    }
    Ok(state)
}

/// Correction interactions placed in components of the error region:
/// positive ones in false negatives, negative ones in false positives.
pub fn correction_prompts<R: Rng + ?Sized>(
    truth: &SegMask,
    prediction: &SegMask,
    cfg: &PromptSampleConfig,
    rng: &mut R,
) -> Result<InteractionState> {
    let error = error_region(truth, prediction, DEFAULT_THRESHOLD)?;
    let (h, w) = truth.shape();
    let mut state = InteractionState::empty(h, w);
    if error.is_empty() {
        return Ok(state);
    }
    let n_fn = error.false_negative.count();
    let n_fp = error.false_positive.count();
    let n_cor = cfg.corrections.sample(rng);
    for _ in 0..n_cor {
        let positive = rng.random_range(0..n_fn + n_fp) < n_fn;
        let region = if positive {
            &error.false_negative
        } else {
            &error.false_positive
        };
        let component = random_component(region, rng);
        match pick_weighted(&cfg.correction_kinds, rng) {
            CorrectionKind::Click => {
                let p = random_point(&component, rng).expect("nonempty component");
                if positive {
                    state.positive_clicks.push(p);
                } else {
                    state.negative_clicks.push(p);
                }
            }
            CorrectionKind::Scribble => {
                let s = scribble_in(&component, cfg, rng)?;
                let target = if positive {
                    &mut state.positive_scribbles
                } else {
                    &mut state.negative_scribbles
                };
                *target = target.or(&s);
            }
        }
    }
    Ok(state)
}

/// A 4-connected component drawn with probability proportional to its size.
fn random_component<R: Rng + ?Sized>(region: &Bitmap, rng: &mut R) -> Bitmap {
    let (labels, sizes) = label_components(region, Connectivity::Four);
    let total: usize = sizes.iter().sum();
    let mut u = rng.random_range(0..total);
    let mut chosen = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if u < s {
            chosen = i as u32 + 1;
            break;
        }
        u -= s;
    }
    let (h, w) = region.shape();
    Bitmap::from_fn(h, w, |r, c| labels[r * w + c] == chosen)
}

/// Evaluation protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    CenterClicks,
    CenterlineScribbles,
}

/// Deterministic first step of a protocol, built from the ground truth.
pub fn protocol_initial(truth: &SegMask, protocol: Protocol) -> Result<InteractionState> {
    let fg = truth.to_bitmap(DEFAULT_THRESHOLD);
    let (h, w) = truth.shape();
    let mut state = InteractionState::empty(h, w);
    match protocol {
        Protocol::CenterClicks => state.positive_clicks.push(center_click(&fg)?),
        Protocol::CenterlineScribbles => {
            state.positive_scribbles = centerline_scribble::<rand_chacha::ChaCha8Rng>(&fg, None, None)?;
            let bg = fg.not();
            if bg.any() {
                state.negative_scribbles = centerline_scribble::<rand_chacha::ChaCha8Rng>(&bg, None, None)?;
            }
        }
    }
    Ok(state)
}

/// Deterministic correction step of a protocol from the current error region.
pub fn protocol_correction(truth: &SegMask, prediction: &SegMask, protocol: Protocol) -> Result<InteractionState> {
    let error = error_region(truth, prediction, DEFAULT_THRESHOLD)?;
    let (h, w) = truth.shape();
    let mut state = InteractionState::empty(h, w);
    match protocol {
        Protocol::CenterClicks => {
            let (sign, p) = center_correction_click(&error)?;
            match sign {
                Sign::Positive => state.positive_clicks.push(p),
                Sign::Negative => state.negative_clicks.push(p),
            }
        }
        Protocol::CenterlineScribbles => {
            let (sign, component) = dominant_error_component(&error)?;
            let s = centerline_scribble::<rand_chacha::ChaCha8Rng>(&component, None, None)?;
            match sign {
                Sign::Positive => state.positive_scribbles = s,
                Sign::Negative => state.negative_scribbles = s,
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask_from(rows: &[&str]) -> Bitmap {
        let h = rows.len();
        let w = rows[0].len();
        Bitmap::from_fn(h, w, |r, c| rows[r].as_bytes()[c] == b'#')
    }

    #[test]
    fn error_region_cases() {
        let t = SegMask::hard(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let e = error_region(&t, &t, 0.5).unwrap();
        assert!(e.is_empty());
        let ones = SegMask::hard(2, 2, vec![1.0; 4]).unwrap();
        let zeros = SegMask::empty(2, 2);
        let e = error_region(&ones, &zeros, 0.5).unwrap();
        assert_eq!(e.false_negative.count(), 4);
        assert_eq!(e.false_positive.count(), 0);
        assert!(error_region(&ones, &SegMask::empty(3, 2), 0.5).is_err());
    }

    #[test]
    fn error_region_matches_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t: Vec<f32> = (0..256).map(|_| rng.random_range(0..2) as f32).collect();
        let p: Vec<f32> = (0..256).map(|_| rng.random::<f32>()).collect();
        let truth = SegMask::hard(16, 16, t.clone()).unwrap();
        let pred = SegMask::soft(16, 16, p.clone()).unwrap();
        let e = error_region(&truth, &pred, 0.5).unwrap();
        for i in 0..256 {
            let (tv, pv) = (t[i] == 1.0, p[i] >= 0.5);
            assert_eq!(e.false_positive.bits()[i], pv && !tv);
            assert_eq!(e.false_negative.bits()[i], tv && !pv);
        }
    }

    #[test]
    fn center_click_cases() {
        let full = Bitmap::from_fn(11, 11, |_, _| true);
        assert_eq!(center_click(&full).unwrap(), Point::new(5, 5));
        let two = mask_from(&[
            "###....", //
            "###..##",
            "###..##",
        ]);
        let p = center_click(&two).unwrap();
        assert!(p.col < 3, "click {p:?} must be in the 9-pixel component");
        assert!(matches!(center_click(&Bitmap::new(3, 3)), Err(Error::NoClickAvailable)));
    }

    #[test]
    fn correction_click_sign() {
        let mut fn_region = Bitmap::new(12, 12);
        for r in 0..4 {
            for c in 0..5 {
                fn_region.set(r, c, true);
            }
        }
        let mut fp_region = Bitmap::new(12, 12);
        for c in 8..11 {
            fp_region.set(10, c, true);
        }
        let e = ErrorRegion {
            false_positive: fp_region.clone(),
            false_negative: fn_region.clone(),
        };
        let (sign, p) = center_correction_click(&e).unwrap();
        assert_eq!(sign, Sign::Positive);
        assert!(fn_region.get(p.row, p.col));
        let e = ErrorRegion {
            false_positive: fp_region.clone(),
            false_negative: Bitmap::new(12, 12),
        };
        assert_eq!(center_correction_click(&e).unwrap().0, Sign::Negative);
        let none = ErrorRegion {
            false_positive: Bitmap::new(2, 2),
            false_negative: Bitmap::new(2, 2),
        };
        assert!(matches!(center_correction_click(&none), Err(Error::NoCorrectionNeeded)));
    }

    #[test]
    fn equal_components_resolve_positive() {
        let a = mask_from(&["##..", "...."]);
        let b = mask_from(&["....", "..##"]);
        let e = ErrorRegion {
            false_positive: b,
            false_negative: a,
        };
        assert_eq!(center_correction_click(&e).unwrap().0, Sign::Positive);
    }

    #[test]
    fn scribble_on_degenerate_masks() {
        let mut single = Bitmap::new(4, 4);
        single.set(1, 2, true);
        let s = centerline_scribble::<ChaCha8Rng>(&single, Some(5), None).unwrap();
        assert_eq!(s, single);
        assert!(matches!(
            centerline_scribble::<ChaCha8Rng>(&Bitmap::new(4, 4), None, None),
            Err(Error::NoScribbleAvailable)
        ));
        let bar = Bitmap::from_fn(3, 20, |_, _| true);
        let s = centerline_scribble::<ChaCha8Rng>(&bar, Some(6), None).unwrap();
        assert!(s.count() <= 6 && s.any());
        assert!(s.points().all(|p| p.row == 1));
    }

    #[test]
    fn forced_single_center_click() {
        let truth = SegMask::from_bitmap(&Bitmap::from_fn(16, 16, |r, c| (4..9).contains(&r) && (4..9).contains(&c)));
        let cfg = PromptSampleConfig {
            initial_positive: CountRange::new(1, 1),
            initial_negative: CountRange::new(0, 0),
            combos: vec![(PromptCombo::ClicksOnly, 1.0)],
            click_placement: ClickPlacement::Center,
            ..PromptSampleConfig::for_resolution(16)
        };
        let s = initial_prompts(&truth, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut expected = InteractionState::empty(16, 16);
        expected.positive_clicks.push(Point::new(6, 6));
        assert_eq!(s, expected);
    }

    #[test]
    fn forced_box_without_jitter_is_tight() {
        let truth = SegMask::from_bitmap(&Bitmap::from_fn(20, 20, |r, c| (3..=7).contains(&r) && (10..=15).contains(&c)));
        let cfg = PromptSampleConfig {
            combos: vec![(PromptCombo::BoxOnly, 1.0)],
            box_jitter: 0,
            ..PromptSampleConfig::for_resolution(20)
        };
        let s = initial_prompts(&truth, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(
            s.bbox,
            Some(BoxPrompt {
                r0: 3,
                c0: 10,
                r1: 7,
                c1: 15
            })
        );
        assert!(initial_prompts(&SegMask::empty(4, 4), &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn correction_scribble_inside_false_negatives() {
        let truth = SegMask::from_bitmap(&Bitmap::from_fn(24, 24, |r, c| (4..20).contains(&r) && (4..14).contains(&c)));
        let pred = SegMask::from_bitmap(&Bitmap::from_fn(24, 24, |r, c| (4..20).contains(&r) && (4..8).contains(&c)));
        let cfg = PromptSampleConfig {
            corrections: CountRange::new(1, 1),
            correction_kinds: vec![(CorrectionKind::Scribble, 1.0)],
            scribble_kinds: vec![(ScribbleKind::Centerline, 1.0)],
            ..PromptSampleConfig::for_resolution(24)
        };
        let e = error_region(&truth, &pred, 0.5).unwrap();
        let s = correction_prompts(&truth, &pred, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(s.positive_scribbles.any());
        assert_eq!(s.positive_scribbles.and_not(&e.false_negative).count(), 0);
        assert!(!s.negative_scribbles.any());
        assert!(s.positive_clicks.is_empty() && s.negative_clicks.is_empty());
        let same = correction_prompts(&truth, &truth, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(same.is_empty());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let truth = SegMask::from_bitmap(&Bitmap::from_fn(32, 32, |r, c| (r as i32 - 16).pow(2) + (c as i32 - 14).pow(2) < 60));
        let pred = SegMask::from_bitmap(&Bitmap::from_fn(32, 32, |r, c| (r as i32 - 12).pow(2) + (c as i32 - 18).pow(2) < 50));
        let cfg = PromptSampleConfig::for_resolution(32);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = initial_prompts(&truth, &cfg, &mut rng).unwrap();
            let b = correction_prompts(&truth, &pred, &cfg, &mut rng).unwrap();
            (a, b)
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn protocol_steps() {
        let truth = SegMask::from_bitmap(&Bitmap::from_fn(16, 16, |r, c| (2..9).contains(&r) && (2..9).contains(&c)));
        let s = protocol_initial(&truth, Protocol::CenterClicks).unwrap();
        assert_eq!(s.positive_clicks, vec![Point::new(5, 5)]);
        let s = protocol_initial(&truth, Protocol::CenterlineScribbles).unwrap();
        let fg = truth.to_bitmap(0.5);
        assert!(s.positive_scribbles.any() && s.negative_scribbles.any());
        assert_eq!(s.positive_scribbles.and_not(&fg).count(), 0);
        assert_eq!(s.negative_scribbles.and(&fg).count(), 0);
        let c = protocol_correction(&truth, &SegMask::empty(16, 16), Protocol::CenterlineScribbles).unwrap();
        assert!(c.positive_scribbles.any() && !c.negative_scribbles.any());
        assert!(matches!(
            protocol_correction(&truth, &truth, Protocol::CenterClicks),
            Err(Error::NoCorrectionNeeded)
        ));
    }
}
