//! Intensity rescaling, resizing and slice selection.

use crate::error::{Error, Result};
use crate::network::ops::resize_plane;
use crate::types::{Image, SegMask, DEFAULT_THRESHOLD};

/// Min-max rescale to `[0, 1]` then bilinear resize to `side × side`.
/// Constant rasters map to zeros.
pub fn preprocess(raw: &[f32], height: usize, width: usize, side: usize) -> Result<Image> {
    if raw.is_empty() || raw.len() != height * width {
        return Err(Error::input("preprocess needs a nonempty raster matching its shape"));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("raster contains non-finite values"));
    }
    let (lo, hi) = raw.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scaled: Vec<f32> = if hi > lo {
        raw.iter().map(|&v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; raw.len()]
    };
    let resized = if (height, width) == (side, side) {
        scaled
    } else {
        resize_plane(&scaled, height, width, side, side)
    };
    Ok(Image::from_clamped(side, side, resized))
}

/// Bilinear resize of a label followed by thresholding at 0.5.
pub fn preprocess_label(raw: &[f32], height: usize, width: usize, side: usize) -> Result<SegMask> {
    if raw.len() != height * width {
        return Err(Error::input("label raster does not match its shape"));
    }
    let bin: Vec<f32> = raw.iter().map(|&v| if v >= DEFAULT_THRESHOLD { 1.0 } else { 0.0 }).collect();
    let resized = if (height, width) == (side, side) {
        bin
    } else {
        resize_plane(&bin, height, width, side, side)
    };
    SegMask::hard(
        side,
        side,
        resized.into_iter().map(|v| if v >= DEFAULT_THRESHOLD { 1.0 } else { 0.0 }).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceMode {
    MaxSlice,
    MidSlice,
}

/// Index of the chosen slice along `axis` of a `dims[0] × dims[1] × dims[2]`
/// label volume.
pub fn select_slice_index(label: &[f32], dims: [usize; 3], axis: usize, mode: SliceMode) -> Result<usize> {
    if axis > 2 {
        return Err(Error::input(format!("axis {axis} out of range")));
    }
    if label.len() != dims.iter().product::<usize>() {
        return Err(Error::input("label volume does not match its dims"));
    }
    let depth = dims[axis];
    match mode {
        SliceMode::MidSlice => Ok(depth / 2),
        SliceMode::MaxSlice => {
            let mut areas = vec![0usize; depth];
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    for k in 0..dims[2] {
                        if label[(i * dims[1] + j) * dims[2] + k] >= DEFAULT_THRESHOLD {
                            areas[[i, j, k][axis]] += 1;
                        }
                    }
                }
            }
            let best = areas.iter().enumerate().fold(0, |b, (i, &a)| if a > areas[b] { i } else { b });
            if areas[best] == 0 {
                return Err(Error::EmptyLabelVolume);
            }
            Ok(best)
        }
    }
}

/// Extracts slice `index` along `axis`; returns the raster and its shape.
pub fn extract_slice(volume: &[f32], dims: [usize; 3], axis: usize, index: usize) -> (Vec<f32>, usize, usize) {
    let (h, w) = match axis {
        0 => (dims[1], dims[2]),
        1 => (dims[0], dims[2]),
        _ => (dims[0], dims[1]),
    };
    let mut out = Vec::with_capacity(h * w);
    for a in 0..h {
        for b in 0..w {
            let (i, j, k) = match axis {
                0 => (index, a, b),
                1 => (a, index, b),
                _ => (a, b, index),
            };
            out.push(volume[(i * dims[1] + j) * dims[2] + k]);
        }
    }
    (out, h, w)
}

/// Picks a slice from an image/label volume pair and preprocesses both.
pub fn select_slice(
    image: &[f32],
    label: &[f32],
    dims: [usize; 3],
    axis: usize,
    mode: SliceMode,
    side: usize,
) -> Result<(Image, SegMask)> {
    if image.len() != label.len() {
        return Err(Error::input("image and label volumes differ in size"));
    }
    let idx = select_slice_index(label, dims, axis, mode)?;
    let (x, h, w) = extract_slice(image, dims, axis, idx);
    let (y, _, _) = extract_slice(label, dims, axis, idx);
    Ok((preprocess(&x, h, w, side)?, preprocess_label(&y, h, w, side)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_maps_to_zero() {
        let img = preprocess(&[3.0; 16], 4, 4, 4).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_mean_preserved() {
        let raw: Vec<f32> = (0..256 * 256).map(|i| (((i / 256) + (i % 256)) % 2) as f32).collect();
        let img = preprocess(&raw, 256, 256, 128).unwrap();
        let mean = img.pixels().iter().map(|&v| v as f64).sum::<f64>() / img.pixels().len() as f64;
        assert!((mean - 0.5).abs() < 1e-6);
    }

    #[test]
    fn idempotent_at_fixed_resolution() {
        let raw: Vec<f32> = (0..64).map(|i| ((i * 37) % 17) as f32).collect();
        let a = preprocess(&raw, 8, 8, 8).unwrap();
        let b = preprocess(a.pixels(), 8, 8, 8).unwrap();
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn slice_rules() {
        // Areas per slice along axis 0: [0, 3, 1].
        let mut label = vec![0.0f32; 3 * 2 * 2];
        for i in [4, 5, 6, 8] {
            label[i] = 1.0;
        }
        assert_eq!(select_slice_index(&label, [3, 2, 2], 0, SliceMode::MaxSlice).unwrap(), 1);
        assert_eq!(select_slice_index(&[0.0; 5], [5, 1, 1], 0, SliceMode::MidSlice).unwrap(), 2);
        assert_eq!(select_slice_index(&[1.0, 1.0, 1.0, 1.0], [2, 2, 1], 0, SliceMode::MaxSlice).unwrap(), 0);
        assert!(matches!(
            select_slice_index(&[0.0; 4], [2, 2, 1], 0, SliceMode::MaxSlice),
            Err(Error::EmptyLabelVolume)
        ));
    }
}
