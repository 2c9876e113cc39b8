use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{Detector, DetectorError, DetectorRequest, DetectorResponse, LocalDetection, SliceWindow};
use crate::error::{Error, Result};
use crate::model::{ClassId, GroundTruth, ImageMeta, PixelBox};

/// Size range of simulated false-positive boxes, in pixels.
const FALSE_POSITIVE_SIDE: (f64, f64) = (20.0, 200.0);

/// Share of an object that must fall inside a window for it to be seen there.
const MIN_VISIBLE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleNoise {
    /// Maximum uniform perturbation of each box edge, in pixels.
    pub jitter_px: f64,
    pub drop_rate: f64,
    /// Expected false positives per detector call (Poisson mean).
    pub fp_rate: f64,
    /// Objects whose smaller side renders below this after resizing the window
    /// to the detector input are dropped with probability `downscale_drop`.
    pub min_visible_px: f64,
    pub downscale_drop: f64,
    pub conf_lo: f64,
    pub conf_hi: f64,
}

impl OracleNoise {
    /// Returns ground truth verbatim with confidence 1.
    pub fn zero() -> Self {
        OracleNoise {
            jitter_px: 0.0,
            drop_rate: 0.0,
            fp_rate: 0.0,
            min_visible_px: 0.0,
            downscale_drop: 0.0,
            conf_lo: 1.0,
            conf_hi: 1.0,
        }
    }

    /// Loses small objects on downscaled inputs, otherwise mildly noisy.
    pub fn downscale_sensitive(min_visible_px: f64, downscale_drop: f64) -> Self {
        OracleNoise {
            jitter_px: 2.0,
            drop_rate: 0.0,
            fp_rate: 0.0,
            min_visible_px,
            downscale_drop,
            conf_lo: 0.5,
            conf_hi: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("drop_rate", self.drop_rate),
            ("fp_rate", self.fp_rate),
            ("downscale_drop", self.downscale_drop),
            ("conf_lo", self.conf_lo),
            ("conf_hi", self.conf_hi),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("oracle {name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.jitter_px >= 0.0 && self.min_visible_px >= 0.0) {
            return Err(Error::Config("oracle jitter_px and min_visible_px must be non-negative".into()));
        }
        if self.conf_lo > self.conf_hi {
            return Err(Error::Config("oracle conf_lo exceeds conf_hi".into()));
        }
        Ok(())
    }

    fn confidence<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.conf_lo == self.conf_hi {
            self.conf_hi
        } else {
            self.conf_lo + (self.conf_hi - self.conf_lo) * u
        }
    }
}

/// Simulated detection for one window of an image.
///
/// Each ground truth at least half inside the window is considered in order:
/// it is dropped with `drop_rate`, dropped with `downscale_drop` when its
/// smaller side times `input_size / max(window side)` falls below
/// `min_visible_px`, and otherwise emitted clipped to the window with jittered
/// edges. A Poisson number of random false boxes follows. Every considered
/// object consumes the same number of random draws whether or not it survives.
pub fn oracle_detect<R: Rng + ?Sized>(
    gts: &[GroundTruth],
    noise: &OracleNoise,
    meta: &ImageMeta,
    window: Option<SliceWindow>,
    input_size: u32,
    rng: &mut R,
) -> Vec<LocalDetection> {
    let w = window.unwrap_or(SliceWindow {
        ax: 0,
        ay: 0,
        w: meta.width,
        h: meta.height,
    });
    let (ww, wh) = (w.w as f64, w.h as f64);
    let frame = PixelBox::new(w.ax as f64, w.ay as f64, (w.ax + w.w) as f64, (w.ay + w.h) as f64)
        .expect("windows have positive size");
    let scale = input_size as f64 / ww.max(wh);

    let mut out = Vec::new();
    for gt in gts {
        let Some(visible) = gt.bbox.intersect(&frame) else {
            continue;
        };
        if visible.area() < MIN_VISIBLE_FRACTION * gt.bbox.area() {
            continue;
        }
        let u_drop: f64 = rng.random();
        let u_down: f64 = rng.random();
        let jitter: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0) * noise.jitter_px);
        let confidence = noise.confidence(rng);

        if u_drop < noise.drop_rate {
            continue;
        }
        let rendered = visible.width().min(visible.height()) * scale;
        if rendered < noise.min_visible_px && u_down < noise.downscale_drop {
            continue;
        }
        let local = [
            visible.x1() - w.ax as f64,
            visible.y1() - w.ay as f64,
            visible.x2() - w.ax as f64,
            visible.y2() - w.ay as f64,
        ];
        let jittered = PixelBox::new(
            (local[0] + jitter[0]).clamp(0.0, ww),
            (local[1] + jitter[1]).clamp(0.0, wh),
            (local[2] + jitter[2]).clamp(0.0, ww),
            (local[3] + jitter[3]).clamp(0.0, wh),
        )
        .or_else(|_| PixelBox::new(local[0], local[1], local[2], local[3]))
        .expect("visible part of a ground truth is a valid box");
        out.push(LocalDetection {
            class: gt.class,
            confidence,
            bbox: jittered,
        });
    }

    if noise.fp_rate > 0.0 {
        let count = Poisson::new(noise.fp_rate).map(|p| p.sample(rng) as usize).unwrap_or(0);
        for _ in 0..count {
            let bw = rng.random_range(FALSE_POSITIVE_SIDE.0..=FALSE_POSITIVE_SIDE.1).min(ww);
            let bh = rng.random_range(FALSE_POSITIVE_SIDE.0..=FALSE_POSITIVE_SIDE.1).min(wh);
            let x = rng.random_range(0.0..=ww - bw);
            let y = rng.random_range(0.0..=wh - bh);
            let class = ClassId::ALL[rng.random_range(0..ClassId::COUNT)];
            let confidence = noise.confidence(rng);
            if let Ok(bbox) = PixelBox::new(x, y, x + bw, y + bh) {
                out.push(LocalDetection {
                    class,
                    confidence,
                    bbox,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub noise: OracleNoise,
    /// Side of the square input the simulated detector resizes windows to.
    pub input_size: u32,
    pub seed: u64,
    /// Self-reported inference time per call.
    pub simulated_ms: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            noise: OracleNoise::zero(),
            input_size: 640,
            seed: 0,
            simulated_ms: 1.0,
        }
    }
}

/// Detector backed by known ground truth. Each request draws from its own
/// generator keyed by (seed, image id, window origin), so results do not
/// depend on which worker serves the request or in which order.
pub struct OracleDetector {
    config: OracleConfig,
    images: HashMap<String, (ImageMeta, Vec<GroundTruth>)>,
}

impl OracleDetector {
    pub fn new(config: OracleConfig, images: impl IntoIterator<Item = (ImageMeta, Vec<GroundTruth>)>) -> Result<Self> {
        config.noise.validate()?;
        if config.input_size == 0 {
            return Err(Error::Config("oracle input_size must be positive".into()));
        }
        Ok(OracleDetector {
            config,
            images: images.into_iter().map(|(m, g)| (m.image_id.clone(), (m, g))).collect(),
        })
    }

    fn rng_for(&self, image_id: &str, window: Option<SliceWindow>) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ fnv1a(image_id.as_bytes()));
        let stream = window.map_or(u64::MAX, |w| ((w.ax as u64) << 32) | w.ay as u64);
        rng.set_stream(stream);
        rng
    }
}

impl Detector for OracleDetector {
    fn detect(&mut self, request: &DetectorRequest) -> std::result::Result<DetectorResponse, DetectorError> {
        let (meta, gts) = self
            .images
            .get(&request.image_id)
            .ok_or_else(|| DetectorError::InvalidRequest(format!("oracle has no image {:?}", request.image_id)))?;
        let mut rng = self.rng_for(&request.image_id, request.slice);
        let detections = oracle_detect(gts, &self.config.noise, meta, request.slice, self.config.input_size, &mut rng);
        Ok(DetectorResponse {
            image_id: request.image_id.clone(),
            detections,
            inference_ms: self.config.simulated_ms,
        })
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}
