//! Tooth separation in dental periapical radiographs.
//!
//! Inter-tooth gaps show up as valleys of the vertical integral projection.
//! Tilted films are handled by estimating the root-canal direction from
//! traced row maxima and either tilting the separator lines or de-rotating
//! the image before projecting.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod phantom;
pub mod preprocess;
pub mod projection;
pub mod rotation;
pub mod segmentation;

pub use error::{Error, Result};
pub use image::{load_image, save_image, GrayImage, RgbImage};
pub use segmentation::{segment, SegmentationConfig, SegmentationResult};
