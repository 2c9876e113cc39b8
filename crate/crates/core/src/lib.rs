//! Building blocks for webpage CAPTCHA detection experiments: synthetic
//! composites, slicing of oversized screenshots, dataset splitting and
//! mixing, and detection metrics computed through a pluggable detector.

pub mod dataset;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod model;
pub mod slicing;
pub mod synthesis;

pub use error::{Error, ErrorKind, Result};
pub use model::{to_norm, to_pixel, ClassId, Detection, GroundTruth, ImageMeta, ImageSource, NormBox, PixelBox};
