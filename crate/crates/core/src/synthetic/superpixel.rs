//! Graph-based superpixels (Felzenszwalb & Huttenlocher).

use serde::{Deserialize, Serialize};

use super::filters::gaussian_blur;
use crate::error::{Error, Result};
use crate::types::Image;

/// Segment ids in `1..=k`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub k: u32,
    pub lambda: f64,
}

impl SuperpixelMap {
    pub fn indicator(&self, id: u32) -> Vec<f32> {
        self.labels.iter().map(|&l| if l == id { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelParams {
    /// Pre-smoothing applied before building the graph.
    pub sigma: f64,
    /// Components smaller than this are merged into a neighbour.
    pub min_size: usize,
}

impl Default for SuperpixelParams {
    fn default() -> Self {
        Self {
            sigma: 0.8,
            min_size: 20,
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
    size: Vec<usize>,
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) {
        let (a, b) = if self.rank[a] < self.rank[b] { (b, a) } else { (a, b) };
        self.parent[b] = a;
        self.size[a] += self.size[b];
        self.internal[a] = weight;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
    }
}

/// Partitions `image` at scale `lambda`. Intensity differences are measured
/// on the 0..255 scale, so `lambda` has the same meaning as for 8-bit input.
/// The algorithm involves no randomness; it is deterministic for fixed input.
pub fn superpixel_partition(image: &Image, lambda: f64, params: &SuperpixelParams) -> Result<SuperpixelMap> {
    if !lambda.is_finite() || lambda < 1.0 {
        return Err(Error::input(format!("superpixel scale must be >= 1, got {lambda}")));
    }
    let (h, w) = image.shape();
    let n = h * w;
    let smoothed = if params.sigma > 0.0 {
        gaussian_blur(image.pixels(), h, w, params.sigma, (4.0 * params.sigma).ceil() as usize)
    } else {
        image.pixels().to_vec()
    };
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(4 * n);
    let diff = |a: usize, b: usize| (smoothed[a] as f64 - smoothed[b] as f64).abs();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                edges.push((diff(i, i + 1), i, i + 1));
            }
            if r + 1 < h {
                edges.push((diff(i, i + w), i, i + w));
                if c + 1 < w {
                    edges.push((diff(i, i + w + 1), i, i + w + 1));
                }
                if c > 0 {
                    edges.push((diff(i, i + w - 1), i, i + w - 1));
                }
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = lambda / 255.0;
    let mut set = DisjointSet::new(n);
    for &(weight, a, b) in &edges {
        let (ra, rb) = (set.find(a), set.find(b));
        if ra == rb {
            continue;
        }
        let ta = set.internal[ra] + k / set.size[ra] as f64;
        let tb = set.internal[rb] + k / set.size[rb] as f64;
        if weight <= ta.min(tb) {
            set.union(ra, rb, weight);
        }
    }
    for &(_, a, b) in &edges {
        let (ra, rb) = (set.find(a), set.find(b));
        if ra != rb && (set.size[ra] < params.min_size || set.size[rb] < params.min_size) {
            let internal = set.internal[ra].max(set.internal[rb]);
            set.union(ra, rb, internal);
        }
    }
    let mut ids = vec![0u32; n];
    let mut labels = vec![0u32; n];
    let mut next = 0u32;
    for (i, label) in labels.iter_mut().enumerate() {
        let root = set.find(i);
        if ids[root] == 0 {
            next += 1;
            ids[root] = next;
        }
        *label = ids[root];
    }
    Ok(SuperpixelMap {
        height: h,
        width: w,
        labels,
        k: next,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_one_segment() {
        let img = Image::filled(16, 16, 0.3);
        let sp = superpixel_partition(&img, 1.0, &SuperpixelParams::default()).unwrap();
        assert_eq!(sp.k, 1);
        assert!(sp.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn strong_edge_separates_halves() {
        let img = Image::new(16, 16, (0..256).map(|i| if i % 16 < 8 { 0.0 } else { 1.0 }).collect()).unwrap();
        let sp = superpixel_partition(&img, 5.0, &SuperpixelParams::default()).unwrap();
        for r in 0..16 {
            assert_ne!(sp.labels[r * 16], sp.labels[r * 16 + 15]);
        }
    }

    #[test]
    fn ids_are_contiguous_and_deterministic() {
        let img = Image::new(20, 20, (0..400).map(|i| ((i * 7919) % 101) as f32 / 100.0).collect()).unwrap();
        let a = superpixel_partition(&img, 50.0, &SuperpixelParams::default()).unwrap();
        let b = superpixel_partition(&img, 50.0, &SuperpixelParams::default()).unwrap();
        assert_eq!(a, b);
        let mut seen = vec![false; a.k as usize];
        for &l in &a.labels {
            assert!(l >= 1 && l <= a.k);
            seen[l as usize - 1] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert!(superpixel_partition(&img, 0.5, &SuperpixelParams::default()).is_err());
    }
}
