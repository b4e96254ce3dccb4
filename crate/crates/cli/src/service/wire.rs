//! JSON envelopes and raster encodings of the HTTP API.
//!
//! Rasters are row-major and travel as base64 (standard alphabet, padded):
//!
//! - `"u8"`: one byte per pixel. Masks use 0 for background and any nonzero
//!   byte for foreground; images map byte `b` to intensity `b / 255`.
//! - `"f32le"`: four bytes per pixel, IEEE-754 single precision,
//!   little-endian. Used for images and soft masks without loss.
//!
//! Clicks are `{"row": r, "col": c}` objects, a box is
//! `{"r0", "c0", "r1", "c1"}` with inclusive corners, and scribbles are `u8`
//! rasters.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use ctxseg_core::{Bitmap, BoxPrompt, Image, InteractionState, Point, SegMask};

use super::ApiError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    U8,
    F32le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub encoding: Encoding,
    pub data: String,
}

impl Raster {
    pub fn from_f32(values: &[f32]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            encoding: Encoding::F32le,
            data: STANDARD.encode(bytes),
        }
    }

    pub fn from_u8(values: &[u8]) -> Self {
        Self {
            encoding: Encoding::U8,
            data: STANDARD.encode(values),
        }
    }

    pub fn from_bitmap(bitmap: &Bitmap) -> Self {
        Self::from_u8(&bitmap.bits().iter().map(|&b| u8::from(b)).collect::<Vec<_>>())
    }

    /// Decodes to `len` values; `u8` bytes are scaled to `[0, 1]`.
    pub fn decode(&self, len: usize) -> Result<Vec<f32>, ApiError> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| ApiError::Unprocessable(format!("raster is not valid base64: {e}")))?;
        let values: Vec<f32> = match self.encoding {
            Encoding::U8 => bytes.iter().map(|&b| b as f32 / 255.0).collect(),
            Encoding::F32le => {
                if bytes.len() % 4 != 0 {
                    return Err(ApiError::Unprocessable("f32le raster length is not a multiple of 4".into()));
                }
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
            }
        };
        if values.len() != len {
            return Err(ApiError::Unprocessable(format!("raster has {} pixels, expected {len}", values.len())));
        }
        Ok(values)
    }

    pub fn to_image(&self, height: usize, width: usize) -> Result<Image, ApiError> {
        Image::new(height, width, self.decode(height * width)?).map_err(unprocessable)
    }

    /// Reads a mask and binarizes it at 0.5.
    pub fn to_hard_mask(&self, height: usize, width: usize) -> Result<SegMask, ApiError> {
        let values = self.decode(height * width)?;
        let hard = values.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
        SegMask::hard(height, width, hard).map_err(unprocessable)
    }

    pub fn to_soft_mask(&self, height: usize, width: usize) -> Result<SegMask, ApiError> {
        SegMask::soft(height, width, self.decode(height * width)?).map_err(unprocessable)
    }

    /// Nonzero pixels of a `u8` raster, or pixels at least 0.5 of an `f32le` one.
    pub fn to_bitmap(&self, height: usize, width: usize) -> Result<Bitmap, ApiError> {
        let values = self.decode(height * width)?;
        let bits = match self.encoding {
            Encoding::U8 => values.iter().map(|&v| v > 0.0).collect(),
            Encoding::F32le => values.iter().map(|&v| v >= 0.5).collect(),
        };
        Bitmap::from_bits(height, width, bits).map_err(unprocessable)
    }
}

pub fn unprocessable(e: ctxseg_core::Error) -> ApiError {
    ApiError::Unprocessable(e.to_string())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Interactions {
    pub positive_clicks: Vec<Point>,
    pub negative_clicks: Vec<Point>,
    pub positive_scribbles: Option<Raster>,
    pub negative_scribbles: Option<Raster>,
    #[serde(rename = "box")]
    pub bbox: Option<BoxPrompt>,
}

impl Interactions {
    pub fn to_state(&self, height: usize, width: usize) -> Result<InteractionState, ApiError> {
        let mut state = InteractionState::empty(height, width);
        state.positive_clicks = self.positive_clicks.clone();
        state.negative_clicks = self.negative_clicks.clone();
        if let Some(r) = &self.positive_scribbles {
            state.positive_scribbles = r.to_bitmap(height, width)?;
        }
        if let Some(r) = &self.negative_scribbles {
            state.negative_scribbles = r.to_bitmap(height, width)?;
        }
        state.bbox = self.bbox;
        state.validate().map_err(unprocessable)?;
        Ok(state)
    }

    pub fn from_state(state: &InteractionState) -> Self {
        Self {
            positive_clicks: state.positive_clicks.clone(),
            negative_clicks: state.negative_clicks.clone(),
            positive_scribbles: Some(Raster::from_bitmap(&state.positive_scribbles)),
            negative_scribbles: Some(Raster::from_bitmap(&state.negative_scribbles)),
            bbox: state.bbox,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub task: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub task: String,
    pub resolution: usize,
    pub context_size: usize,
    pub checkpoint: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictRequest {
    pub image: Raster,
    #[serde(default)]
    pub interactions: Interactions,
    /// Feed the session's last prediction for this image as the previous
    /// prediction channel.
    #[serde(default)]
    pub use_prev: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    /// Soft mask, `f32le`.
    pub mask: Raster,
    pub height: usize,
    pub width: usize,
    pub context_size: usize,
    pub used_previous: bool,
    pub latency_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcceptRequest {
    pub image: Raster,
    pub mask: Raster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptResponse {
    pub context_size: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub interactions: Interactions,
}

/// The three prompt channels, each `f32le`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub positive: Raster,
    pub negative: Raster,
    #[serde(rename = "box")]
    pub bbox: Raster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportResponse {
    /// Path of the written manifest on the server.
    pub path: String,
    pub manifest: ctxseg_core::data::DatasetManifest,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_rasters_round_trip_bit_exactly() {
        let values = vec![0.0, 0.1, 1.0 / 3.0, 1.0];
        let r = Raster::from_f32(&values);
        assert_eq!(r.decode(4).unwrap(), values);
        assert!(matches!(r.decode(5), Err(ApiError::Unprocessable(_))));
    }

    #[test]
    fn soft_mask_is_binarized_on_ingest() {
        let r = Raster::from_f32(&[0.2, 0.5, 0.7, 0.49]);
        assert_eq!(r.to_hard_mask(2, 2).unwrap().pixels(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn interactions_round_trip_through_state() {
        let mut state = InteractionState::empty(4, 4);
        state.positive_clicks.push(Point::new(1, 2));
        state.negative_scribbles.set(3, 3, true);
        state.bbox = Some(BoxPrompt { r0: 0, c0: 0, r1: 2, c1: 2 });
        let wire = Interactions::from_state(&state);
        let json = serde_json::to_string(&wire).unwrap();
        let back: Interactions = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_state(4, 4).unwrap(), state);
    }
}
