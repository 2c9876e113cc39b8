//! Detector interface and its implementations: a noisy ground-truth oracle, an
//! external child process speaking newline-delimited JSON, and the evaluation
//! pipeline that drives either through slicing, merging and matching.

mod external;
mod oracle;
mod pipeline;
pub mod protocol;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClassId, Detection, PixelBox};

pub use external::{ExternalConfig, ExternalDetector};
pub use oracle::{oracle_detect, OracleConfig, OracleDetector, OracleNoise};
pub use pipeline::{
    build_detectors, evaluate_pipeline, evaluate_with, DetectorSpec, EvalDataset, EvalImage, EvalRunConfig,
};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("detector unavailable: {0}")]
    Unavailable(String),
    #[error("detector did not answer within {0:?}")]
    Timeout(Duration),
    #[error("malformed detector message: {0}")]
    Malformed(String),
    #[error("detector response violates schema: {0}")]
    SchemaViolation(String),
    #[error("detector reported an error: {0}")]
    Remote(String),
    #[error("invalid detector request: {0}")]
    InvalidRequest(String),
}

/// Sub-window of an image handed to a detector, in full-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceWindow {
    pub ax: u32,
    pub ay: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRequest {
    pub image_id: String,
    pub image_path: PathBuf,
    /// `None` means the whole image.
    pub slice: Option<SliceWindow>,
}

/// One detection in the coordinates of the request window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDetection {
    pub class: ClassId,
    pub confidence: f64,
    pub bbox: PixelBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResponse {
    pub image_id: String,
    pub detections: Vec<LocalDetection>,
    /// Inference time as reported by the detector itself.
    pub inference_ms: f64,
}

impl DetectorResponse {
    /// Converts to full-image detections by shifting with the window origin.
    pub fn into_detections(self, origin: (u32, u32)) -> Vec<Detection> {
        let image_id = self.image_id;
        self.detections
            .into_iter()
            .map(|d| Detection {
                image_id: image_id.clone(),
                class: d.class,
                bbox: d
                    .bbox
                    .translate(origin.0 as f64, origin.1 as f64)
                    .expect("non-negative shift keeps boxes valid"),
                confidence: d.confidence,
            })
            .collect()
    }
}

pub trait Detector: Send {
    fn detect(&mut self, request: &DetectorRequest) -> Result<DetectorResponse, DetectorError>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&mut self, request: &DetectorRequest) -> Result<DetectorResponse, DetectorError> {
        (**self).detect(request)
    }
}
