//! Overlap and boundary metrics, hierarchical averaging and bootstrap
//! confidence intervals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::morph::{boundary, distance_to};
use crate::types::{Bitmap, SegMask, DEFAULT_THRESHOLD};

/// `2|A∩B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice_bitmaps(a: &Bitmap, b: &Bitmap) -> Result<f64> {
    ensure_shape(a.shape(), b.shape())?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Dice of two masks after binarizing both at 0.5.
pub fn dice_score(a: &SegMask, b: &SegMask) -> Result<f64> {
    dice_bitmaps(&a.to_bitmap(DEFAULT_THRESHOLD), &b.to_bitmap(DEFAULT_THRESHOLD))
}

/// 95th percentile of the pooled nearest-boundary distances in both
/// directions, with unit pixel spacing.
pub fn hd95(a: &Bitmap, b: &Bitmap) -> Result<f64> {
    hausdorff_percentile(a, b, 95.0)
}

pub fn hausdorff_percentile(a: &Bitmap, b: &Bitmap, q: f64) -> Result<f64> {
    ensure_shape(a.shape(), b.shape())?;
    if !a.any() || !b.any() {
        return Err(Error::EmptyMaskDistanceUndefined);
    }
    let (ba, bb) = (boundary(a), boundary(b));
    let to_a = distance_to(&ba).expect("nonempty mask has a boundary");
    let to_b = distance_to(&bb).expect("nonempty mask has a boundary");
    let mut pooled = Vec::with_capacity(ba.count() + bb.count());
    pooled.extend(ba.bits().iter().zip(&to_b).filter(|(&on, _)| on).map(|(_, &d)| d));
    pooled.extend(bb.bits().iter().zip(&to_a).filter(|(&on, _)| on).map(|(_, &d)| d));
    pooled.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&pooled, q))
}

/// Linear-interpolation percentile of an ascending, nonempty slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// One metric value with its position in the dataset hierarchy. Empty
/// optional levels are skipped when averaging.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub dataset: String,
    #[serde(default)]
    pub subdataset: Option<String>,
    #[serde(default)]
    pub modality: Option<String>,
    #[serde(default)]
    pub axis: Option<u8>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub subject: Option<String>,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(dataset: impl Into<String>, value: f64) -> Self {
        Self {
            dataset: dataset.into(),
            value,
            ..Default::default()
        }
    }

    fn path(&self) -> Vec<Option<String>> {
        vec![
            Some(self.dataset.clone()),
            self.subdataset.clone(),
            self.modality.clone(),
            self.axis.map(|a| a.to_string()),
            self.label.clone(),
            self.subject.clone(),
        ]
    }
}

#[derive(Default)]
struct Node {
    values: Vec<f64>,
    children: BTreeMap<String, Node>,
}

impl Node {
    fn mean(&self) -> f64 {
        let mut parts: Vec<f64> = self.values.clone();
        parts.extend(self.children.values().map(Node::mean));
        parts.iter().sum::<f64>() / parts.len() as f64
    }
}

/// Mean taken level by level from subject up to dataset, so every dataset
/// contributes equally regardless of how many records it has.
pub fn hierarchical_mean(records: &[MetricRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::input("hierarchical_mean needs at least one record"));
    }
    let mut root = Node::default();
    for rec in records {
        let mut node = &mut root;
        for key in rec.path().into_iter().flatten() {
            node = node.children.entry(key).or_default();
        }
        node.values.push(rec.value);
    }
    Ok(root.mean())
}

/// Percentile bootstrap interval of `statistic` at the given level.
pub fn bootstrap_ci(
    samples: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::input("bootstrap_ci needs at least two samples"));
    }
    if n_boot == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::input("bootstrap_ci needs n_boot > 0 and level in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_boot);
    let mut buf = vec![0.0; samples.len()];
    for _ in 0..n_boot {
        for slot in buf.iter_mut() {
            *slot = samples[rng.random_range(0..samples.len())];
        }
        stats.push(statistic(&buf));
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0 * 100.0;
    Ok((percentile_sorted(&stats, alpha), percentile_sorted(&stats, 100.0 - alpha)))
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bm(h: usize, w: usize, on: &[(usize, usize)]) -> Bitmap {
        Bitmap::from_fn(h, w, |r, c| on.contains(&(r, c)))
    }

    fn square(h: usize, r0: usize, c0: usize, side: usize) -> Bitmap {
        Bitmap::from_fn(h, h, |r, c| (r0..r0 + side).contains(&r) && (c0..c0 + side).contains(&c))
    }

    fn brute_hd(a: &Bitmap, b: &Bitmap, q: f64) -> f64 {
        let edge = |m: &Bitmap| {
            let (h, w) = m.shape();
            let mut out = Vec::new();
            for r in 0..h {
                for c in 0..w {
                    if !m.get(r, c) {
                        continue;
                    }
                    let bg = |rr: isize, cc: isize| {
                        rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize || !m.get(rr as usize, cc as usize)
                    };
                    let (ri, ci) = (r as isize, c as isize);
                    if bg(ri - 1, ci) || bg(ri + 1, ci) || bg(ri, ci - 1) || bg(ri, ci + 1) {
                        out.push((r as f64, c as f64));
                    }
                }
            }
            out
        };
        let (ea, eb) = (edge(a), edge(b));
        let nearest = |p: &(f64, f64), set: &[(f64, f64)]| {
            set.iter().map(|s| ((p.0 - s.0).powi(2) + (p.1 - s.1).powi(2)).sqrt()).fold(f64::INFINITY, f64::min)
        };
        let mut d: Vec<f64> = ea.iter().map(|p| nearest(p, &eb)).collect();
        d.extend(eb.iter().map(|p| nearest(p, &ea)));
        d.sort_by(f64::total_cmp);
        let pos = q / 100.0 * (d.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        d[lo] * (1.0 - (pos - lo as f64)) + d[hi] * (pos - lo as f64)
    }

    #[test]
    fn dice_examples() {
        let a = square(4, 0, 0, 2);
        assert_eq!(dice_bitmaps(&a, &a).unwrap(), 1.0);
        assert_eq!(dice_bitmaps(&a, &square(4, 2, 2, 2)).unwrap(), 0.0);
        assert_eq!(dice_bitmaps(&a, &square(4, 1, 0, 2)).unwrap(), 0.5);
        assert_eq!(dice_bitmaps(&Bitmap::new(3, 3), &Bitmap::new(3, 3)).unwrap(), 1.0);
        assert!(dice_bitmaps(&Bitmap::new(3, 3), &a).is_err());
    }

    #[test]
    fn hd95_examples() {
        let a = square(10, 2, 2, 4);
        assert_eq!(hd95(&a, &a).unwrap(), 0.0);
        assert_eq!(hd95(&bm(3, 9, &[(1, 1)]), &bm(3, 9, &[(1, 6)])).unwrap(), 5.0);
        let b = square(10, 3, 2, 4);
        assert!((hd95(&a, &b).unwrap() - brute_hd(&a, &b, 95.0)).abs() < 1e-9);
        assert!(matches!(hd95(&a, &Bitmap::new(10, 10)), Err(Error::EmptyMaskDistanceUndefined)));
    }

    #[test]
    fn hierarchical_mean_weights_datasets_equally() {
        let mut recs: Vec<_> = (0..100).map(|_| MetricRecord::new("big", 0.8)).collect();
        recs.push(MetricRecord::new("small", 0.5));
        recs.push(MetricRecord::new("small", 0.7));
        assert!((hierarchical_mean(&recs).unwrap() - 0.7).abs() < 1e-12);
        recs.reverse();
        assert!((hierarchical_mean(&recs).unwrap() - 0.7).abs() < 1e-12);
        let flat = [0.2, 0.4, 0.9].map(|v| MetricRecord::new("d", v));
        assert!((hierarchical_mean(&flat).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hierarchical_mean_uses_inner_levels() {
        let rec = |subject: &str, v: f64| MetricRecord {
            subject: Some(subject.into()),
            ..MetricRecord::new("d", v)
        };
        // Subject s1 has three records, s2 one: (0.5 + 1.0) / 2.
        let recs = [rec("s1", 0.4), rec("s1", 0.5), rec("s1", 0.6), rec("s2", 1.0)];
        assert!((hierarchical_mean(&recs).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let c = vec![0.3; 20];
        let (lo, hi) = bootstrap_ci(&c, mean, 200, 0.95, 1).unwrap();
        assert_eq!(lo, hi);
        assert!((lo - 0.3).abs() < 1e-12);
        let s: Vec<f64> = (0..50).map(|i| (i * 37 % 11) as f64).collect();
        assert_eq!(bootstrap_ci(&s, mean, 300, 0.95, 9).unwrap(), bootstrap_ci(&s, mean, 300, 0.95, 9).unwrap());
        assert!(bootstrap_ci(&[1.0], mean, 10, 0.95, 0).is_err());
    }

    proptest! {
        #[test]
        fn hd95_matches_all_pairs(bits_a in proptest::collection::vec(any::<bool>(), 144), bits_b in proptest::collection::vec(any::<bool>(), 144)) {
            let a = Bitmap::from_bits(12, 12, bits_a).unwrap();
            let b = Bitmap::from_bits(12, 12, bits_b).unwrap();
            prop_assume!(a.any() && b.any());
            prop_assert!((hd95(&a, &b).unwrap() - brute_hd(&a, &b, 95.0)).abs() < 1e-9);
        }

        #[test]
        fn bootstrap_interval_contains_plug_in(seed in any::<u64>(), n in 5usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let (lo, hi) = bootstrap_ci(&s, mean, 400, 0.95, seed).unwrap();
            let m = mean(&s);
            prop_assert!(lo <= m && m <= hi);
        }
    }
}
