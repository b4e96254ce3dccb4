//! Interactive in-context segmentation.
//!
//! A set-conditioned encoder-decoder segments a target image from user
//! interactions (clicks, scribbles, boxes), its own previous prediction and a
//! growing set of already-segmented `(image, label)` pairs.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod interaction;
pub mod metrics;
pub mod morph;
pub mod synthetic;
pub mod network;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    binarize, encode_interactions, stack_target, Bitmap, BoxPrompt, ContextSet, EncodedPrompts, Image,
    InteractionState, MaskKind, Point, SegMask, TargetStack, DEFAULT_CLICK_RADIUS, DEFAULT_THRESHOLD,
};
