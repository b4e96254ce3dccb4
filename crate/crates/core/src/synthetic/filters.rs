//! Small raster filters shared by the augmentations and superpixels.

pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f32> {
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

/// Separable convolution with edge replication.
pub fn separable(plane: &[f32], h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let radius = kernel.len() / 2;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let cc = clamp(c as isize + t as isize - radius as isize, w);
                acc += kv * plane[r * w + cc];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let rr = clamp(r as isize + t as isize - radius as isize, h);
                acc += kv * tmp[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    out
}

pub fn gaussian_blur(plane: &[f32], h: usize, w: usize, sigma: f64, radius: usize) -> Vec<f32> {
    separable(plane, h, w, &gaussian_kernel(sigma, radius))
}

/// Bilinear lookup at fractional `(y, x)`; samples outside the raster read 0.
pub fn sample_bilinear(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = ((y - y0) as f32, (x - x0) as f32);
    let at = |r: f64, c: f64| -> f32 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            plane[r as usize * w + c as usize]
        }
    };
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx;
    let bottom = at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Sobel gradient magnitude with edge replication.
pub fn sobel_magnitude(plane: &[f32], h: usize, w: usize) -> Vec<f32> {
    let at = |r: isize, c: isize| plane[r.clamp(0, h as isize - 1) as usize * w + c.clamp(0, w as isize - 1) as usize];
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1)
                - at(r - 1, c - 1)
                - 2.0 * at(r, c - 1)
                - at(r + 1, c - 1);
            let gy = at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1)
                - at(r - 1, c - 1)
                - 2.0 * at(r - 1, c)
                - at(r - 1, c + 1);
            out[r as usize * w + c as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Blend of the image with its 3×3 smoothed version; `factor > 1` sharpens.
/// Border pixels are left unchanged.
pub fn adjust_sharpness(plane: &[f32], h: usize, w: usize, factor: f32) -> Vec<f32> {
    let mut out = plane.to_vec();
    if h < 3 || w < 3 {
        return out;
    }
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let mut acc = 0.0;
            for dr in 0..3 {
                for dc in 0..3 {
                    let weight = if dr == 1 && dc == 1 { 5.0 } else { 1.0 };
                    acc += weight * plane[(r + dr - 1) * w + c + dc - 1];
                }
            }
            let smooth = acc / 13.0;
            let v = plane[r * w + c];
            out[r * w + c] = (factor * v + (1.0 - factor) * smooth).clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.3, 2);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(k[0], k[4]);
    }

    #[test]
    fn blur_preserves_constants() {
        let p = vec![0.4f32; 30];
        assert!(gaussian_blur(&p, 5, 6, 1.0, 2).iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn bilinear_hits_grid_points() {
        let p: Vec<f32> = (0..12).map(|i| i as f32).collect();
        assert_eq!(sample_bilinear(&p, 3, 4, 1.0, 2.0), 6.0);
        assert_eq!(sample_bilinear(&p, 3, 4, 0.5, 0.5), 2.5);
        assert_eq!(sample_bilinear(&p, 3, 4, -2.0, 0.0), 0.0);
    }

    #[test]
    fn sobel_zero_on_flat() {
        assert!(sobel_magnitude(&[0.7; 25], 5, 5).iter().all(|&v| v.abs() < 1e-6));
    }
}
