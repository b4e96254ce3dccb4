//! Binary morphology used by the prompt simulator and the metrics:
//! connected components, Euclidean distance transform and medial axis.

use std::collections::VecDeque;

use crate::types::{Bitmap, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Component labeling. Labels start at 1 in row-major order of each
/// component's first pixel; 0 is background. Returns the label raster and
/// the size of each component (`sizes[label - 1]`).
pub fn label_components(mask: &Bitmap, connectivity: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (h, w) = mask.shape();
    let mut labels = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Largest 4-connected component; ties go to the component whose first
/// pixel comes first in row-major order.
pub fn largest_component(mask: &Bitmap) -> Option<Bitmap> {
    largest_component_with(mask, Connectivity::Four)
}

pub fn largest_component_with(mask: &Bitmap, connectivity: Connectivity) -> Option<Bitmap> {
    let (labels, sizes) = label_components(mask, connectivity);
    let best = argmax_first(&sizes)? as u32 + 1;
    let (h, w) = mask.shape();
    Some(Bitmap::from_fn(h, w, |r, c| labels[r * w + c] == best))
}

/// Size of the largest 4-connected component (0 for an empty mask).
pub fn largest_component_size(mask: &Bitmap) -> usize {
    label_components(mask, Connectivity::Four)
        .1
        .into_iter()
        .max()
        .unwrap_or(0)
}

fn argmax_first(values: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

const FAR: f64 = 1e20;

/// Exact Euclidean distance from every foreground pixel to the nearest
/// background pixel. Everything outside the raster counts as background,
/// so a full mask still has finite distances. Background pixels get 0.
pub fn distance_transform(mask: &Bitmap) -> Vec<f64> {
    let (h, w) = mask.shape();
    // Pad by one background pixel on each side.
    let (ph, pw) = (h + 2, w + 2);
    let mut grid = vec![0.0f64; ph * pw];
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                grid[(r + 1) * pw + c + 1] = FAR;
            }
        }
    }
    squared_edt_2d(&mut grid, ph, pw);
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = grid[(r + 1) * pw + c + 1].sqrt();
        }
    }
    out
}

/// Exact Euclidean distance from every pixel to the nearest pixel of
/// `targets`. Returns `None` when `targets` is empty.
pub fn distance_to(targets: &Bitmap) -> Option<Vec<f64>> {
    if !targets.any() {
        return None;
    }
    let (h, w) = targets.shape();
    let mut grid: Vec<f64> = targets.bits().iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    squared_edt_2d(&mut grid, h, w);
    Some(grid.into_iter().map(f64::sqrt).collect())
}

fn squared_edt_2d(grid: &mut [f64], h: usize, w: usize) {
    let n = h.max(w);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        squared_edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = d[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        squared_edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&d[..w]);
    }
}

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn squared_edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *out = diff * diff + f[v[k]];
    }
}

/// Pixel of maximal distance-to-background; ties resolve to the smallest
/// `(row, col)`.
pub fn deepest_point(mask: &Bitmap) -> Option<Point> {
    let dist = distance_transform(mask);
    let w = mask.width();
    let mut best: Option<usize> = None;
    for (i, &d) in dist.iter().enumerate() {
        if mask.bits()[i] && best.is_none_or(|b| d > dist[b]) {
            best = Some(i);
        }
    }
    best.map(|i| Point::new(i / w, i % w))
}

/// Medial axis as the ridge of the distance transform: foreground pixels
/// where no 8-neighbour's distance rises by half a step or more. Every
/// global maximum of the distance transform satisfies this, so a nonempty
/// mask always yields a nonempty axis.
pub fn medial_axis(mask: &Bitmap) -> Bitmap {
    let dist = distance_transform(mask);
    let (h, w) = mask.shape();
    Bitmap::from_fn(h, w, |r, c| {
        if !mask.get(r, c) {
            return false;
        }
        let here = dist[r * w + c];
        Connectivity::Eight.offsets().iter().all(|&(dr, dc)| {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                return true;
            }
            let step = ((dr * dr + dc * dc) as f64).sqrt();
            dist[nr as usize * w + nc as usize] - here < 0.5 * step
        })
    })
}

/// Up to `max_pixels` pixels of `region` reachable from `start` through
/// 8-connected steps, in breadth-first order (so every prefix is connected).
pub fn connected_walk(region: &Bitmap, start: Point, max_pixels: usize) -> Vec<Point> {
    let (h, w) = region.shape();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    if !region.get(start.row, start.col) || max_pixels == 0 {
        return out;
    }
    seen[start.row * w + start.col] = true;
    queue.push_back(start);
    while let Some(p) = queue.pop_front() {
        out.push(p);
        if out.len() == max_pixels {
            break;
        }
        for &(dr, dc) in Connectivity::Eight.offsets() {
            let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let j = nr as usize * w + nc as usize;
            if region.bits()[j] && !seen[j] {
                seen[j] = true;
                queue.push_back(Point::new(nr as usize, nc as usize));
            }
        }
    }
    out
}

/// Foreground pixels that touch background (or the raster edge) through a
/// 4-neighbour.
pub fn boundary(mask: &Bitmap) -> Bitmap {
    let (h, w) = mask.shape();
    Bitmap::from_fn(h, w, |r, c| {
        mask.get(r, c)
            && Connectivity::Four.offsets().iter().any(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                nr < 0
                    || nc < 0
                    || nr >= h as isize
                    || nc >= w as isize
                    || !mask.get(nr as usize, nc as usize)
            })
    })
}

/// Pixels on the digital segment between two points (Bresenham).
pub fn line_pixels(a: Point, b: Point) -> Vec<Point> {
    let (mut x0, mut y0) = (a.col as isize, a.row as isize);
    let (x1, y1) = (b.col as isize, b.row as isize);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        out.push(Point::new(y0 as usize, x0 as usize));
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
    out
}
