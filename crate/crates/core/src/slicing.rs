//! Overlapping slice grids for oversized images.
//!
//! Along each axis of length `L`, slices of size `s` start at 0 and each
//! subsequent slice starts `floor(s * i)` pixels before the previous one ends.
//! When a slice would run past `L` it is clamped to `(L - s, L)` and
//! generation stops. Slicing only engages once the larger image side reaches
//! `activation_multiplier * s`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{confidence_order, iou};
use crate::model::{Detection, ImageMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceParams {
    /// Slice edge length in pixels.
    pub size: u32,
    /// Fraction of the slice shared with its predecessor, in `[0, 1)`.
    pub overlap: f64,
    #[serde(default = "default_multiplier")]
    pub activation_multiplier: f64,
}

fn default_multiplier() -> f64 {
    3.0
}

impl Default for SliceParams {
    fn default() -> Self {
        SliceParams {
            size: 640,
            overlap: 0.25,
            activation_multiplier: default_multiplier(),
        }
    }
}

impl SliceParams {
    pub fn new(size: u32, overlap: f64, activation_multiplier: f64) -> Result<Self> {
        let p = SliceParams {
            size,
            overlap,
            activation_multiplier,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("slice size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("slice overlap must lie in [0, 1), got {}", self.overlap)));
        }
        if !(self.activation_multiplier >= 1.0 && self.activation_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "activation multiplier must be >= 1, got {}",
                self.activation_multiplier
            )));
        }
        Ok(())
    }

    /// Pixels shared by consecutive slices.
    pub fn overlap_px(&self) -> u32 {
        (self.size as f64 * self.overlap).floor() as u32
    }

    /// Smallest larger-side length at which slicing engages.
    pub fn activation_threshold(&self) -> f64 {
        self.activation_multiplier * self.size as f64
    }
}

/// Ordered `(start, end)` pixel intervals along one axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSlices(pub Vec<(u32, u32)>);

impl AxisSlices {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u32, u32)> {
        self.0.iter()
    }
}

pub fn axis_slices(length: u32, params: &SliceParams) -> AxisSlices {
    let s = params.size;
    if length <= s {
        return AxisSlices(vec![(0, length)]);
    }
    let step_back = params.overlap_px();
    let mut out = vec![(0, s)];
    let mut end = s;
    while end != length {
        // Strict comparison: a slice ending exactly at `length` is a regular step.
        let next = if end - step_back + s > length {
            (length - s, length)
        } else {
            let start = end - step_back;
            (start, start + s)
        };
        end = next.1;
        out.push(next);
    }
    AxisSlices(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub row: usize,
    pub col: usize,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub image_id: String,
    pub columns: AxisSlices,
    pub rows: AxisSlices,
    pub activated: bool,
}

impl SliceGrid {
    pub fn slice_count(&self) -> usize {
        self.columns.len() * self.rows.len()
    }

    /// Slices in row-major order.
    pub fn slices(&self) -> impl Iterator<Item = Slice> + '_ {
        self.rows.iter().enumerate().flat_map(move |(row, &(y0, y1))| {
            self.columns.iter().enumerate().map(move |(col, &(x0, x1))| Slice {
                row,
                col,
                x: x0,
                y: y0,
                width: x1 - x0,
                height: y1 - y0,
            })
        })
    }
}

pub fn build_grid(meta: &ImageMeta, params: &SliceParams) -> SliceGrid {
    let longest = meta.width.max(meta.height) as f64;
    if longest >= params.activation_threshold() {
        SliceGrid {
            image_id: meta.image_id.clone(),
            columns: axis_slices(meta.width, params),
            rows: axis_slices(meta.height, params),
            activated: true,
        }
    } else {
        SliceGrid {
            image_id: meta.image_id.clone(),
            columns: AxisSlices(vec![(0, meta.width)]),
            rows: AxisSlices(vec![(0, meta.height)]),
            activated: false,
        }
    }
}

/// Moves a slice-local detection into full-image coordinates.
pub fn remap_detection(det: &Detection, origin: (u32, u32)) -> Detection {
    let bbox = det
        .bbox
        .translate(origin.0 as f64, origin.1 as f64)
        .expect("translation by a non-negative offset keeps a valid box valid");
    Detection {
        bbox,
        ..det.clone()
    }
}

/// Per-class non-maximum suppression over full-image detections.
///
/// Survivors are returned highest confidence first.
pub fn merge_detections(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in confidence_order(dets) {
        let d = &dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class == d.class && iou(&k.bbox, &d.bbox) >= iou_threshold);
        if !suppressed {
            kept.push(d.clone());
        }
    }
    kept
}

/// Writes every slice of `image` as `{image_id}_r{row}_c{col}.png` into `dir`.
pub fn export_slices(image: &image::RgbImage, grid: &SliceGrid, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(grid.slice_count());
    for s in grid.slices() {
        let tile = image::imageops::crop_imm(image, s.x, s.y, s.width, s.height).to_image();
        let path = dir.join(format!("{}_r{}_c{}.png", grid.image_id, s.row, s.col));
        tile.save(&path).map_err(|e| Error::image(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassId, ImageSource, PixelBox};
    use proptest::prelude::*;

    fn params(size: u32, overlap: f64) -> SliceParams {
        SliceParams::new(size, overlap, 3.0).unwrap()
    }

    fn meta(w: u32, h: u32) -> ImageMeta {
        ImageMeta::new("page", w, h, ImageSource::RealWebpage).unwrap()
    }

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, conf: f64) -> Detection {
        Detection::new("page", ClassId::Text, PixelBox::new(x1, y1, x2, y2).unwrap(), conf).unwrap()
    }

    #[test]
    fn clamped_second_slice() {
        assert_eq!(axis_slices(1000, &params(640, 0.2)).0, vec![(0, 640), (360, 1000)]);
    }

    #[test]
    fn regular_steps_then_clamp() {
        assert_eq!(
            axis_slices(1920, &params(640, 0.25)).0,
            vec![(0, 640), (480, 1120), (960, 1600), (1280, 1920)]
        );
    }

    #[test]
    fn exact_fit_and_short_axes() {
        for i in [0.0, 0.3, 0.9] {
            assert_eq!(axis_slices(640, &params(640, i)).0, vec![(0, 640)]);
        }
        assert_eq!(axis_slices(100, &params(640, 0.2)).0, vec![(0, 100)]);
        // 640 + 640 = 1280 exactly: middle case, not the clamp.
        assert_eq!(axis_slices(1280, &params(640, 0.0)).0, vec![(0, 640), (640, 1280)]);
    }

    #[test]
    fn invalid_params() {
        assert!(SliceParams::new(0, 0.2, 3.0).is_err());
        assert!(SliceParams::new(640, 1.0, 3.0).is_err());
        assert!(SliceParams::new(640, 0.2, 0.5).is_err());
    }

    #[test]
    fn small_image_is_not_sliced() {
        let g = build_grid(&meta(1000, 500), &params(640, 0.25));
        assert!(!g.activated);
        assert_eq!(g.slice_count(), 1);
        let only = g.slices().next().unwrap();
        assert_eq!((only.x, only.y, only.width, only.height), (0, 0, 1000, 500));
    }

    #[test]
    fn full_hd_grid() {
        let g = build_grid(&meta(1920, 1080), &params(640, 0.25));
        assert!(g.activated);
        assert_eq!(g.columns.len(), 4);
        assert_eq!(g.rows.0, vec![(0, 640), (440, 1080)]);
        assert_eq!(g.slice_count(), 8);
        let all: Vec<_> = g.slices().collect();
        assert_eq!((all[5].row, all[5].col, all[5].x, all[5].y), (1, 1, 480, 440));
    }

    #[test]
    fn slice_sized_image_is_one_slice() {
        let p = SliceParams::new(640, 0.25, 1.0).unwrap();
        let g = build_grid(&meta(640, 640), &p);
        assert!(g.activated);
        assert_eq!(g.slice_count(), 1);
        assert_eq!(build_grid(&meta(640, 640), &params(640, 0.25)).slice_count(), 1);
    }

    #[test]
    fn remap_translates() {
        let d = det(10.0, 20.0, 50.0, 60.0, 0.7);
        assert_eq!(remap_detection(&d, (0, 0)), d);
        let moved = remap_detection(&d, (480, 0));
        assert_eq!(moved.bbox, PixelBox::new(490.0, 20.0, 530.0, 60.0).unwrap());
        assert_eq!((moved.class, moved.confidence), (d.class, d.confidence));
        assert_eq!(moved.bbox.translate(-480.0, 0.0).unwrap(), d.bbox);
    }

    #[test]
    fn merge_cases() {
        let disjoint = vec![det(0.0, 0.0, 10.0, 10.0, 0.5), det(20.0, 20.0, 30.0, 30.0, 0.9)];
        assert_eq!(merge_detections(&disjoint, 0.5).len(), 2);

        let dupes = vec![det(0.0, 0.0, 10.0, 10.0, 0.8), det(0.0, 0.0, 10.0, 10.0, 0.9)];
        let kept = merge_detections(&dupes, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);

        // 10x10 and 10x6 boxes sharing a corner: IoU 0.6
        let pair = vec![det(0.0, 0.0, 10.0, 10.0, 0.9), det(0.0, 0.0, 10.0, 6.0, 0.8)];
        assert!((iou(&pair[0].bbox, &pair[1].bbox) - 0.6).abs() < 1e-12);
        assert_eq!(merge_detections(&pair, 0.5).len(), 1);
        assert_eq!(merge_detections(&pair, 0.7).len(), 2);

        let mut other_class = pair.clone();
        other_class[1].class = ClassId::Button;
        assert_eq!(merge_detections(&other_class, 0.5).len(), 2);
    }

    proptest! {
        #[test]
        fn merge_is_idempotent(
            raw in proptest::collection::vec((0.0..200.0f64, 0.0..200.0f64, 5.0..80.0f64, 5.0..80.0f64, 0.0..=1.0f64, 0usize..2), 0..25),
            thr in 0.1..0.9f64,
        ) {
            let dets: Vec<_> = raw
                .into_iter()
                .map(|(x, y, w, h, c, k)| {
                    let mut d = det(x, y, x + w, y + h, c);
                    d.class = ClassId::ALL[k];
                    d
                })
                .collect();
            let once = merge_detections(&dets, thr);
            prop_assert_eq!(merge_detections(&once, thr), once);
        }

        #[test]
        fn small_boxes_fit_in_some_slice(
            length in 1u32..3000,
            size in prop_oneof![Just(320u32), Just(640u32)],
            overlap in prop_oneof![Just(0.1), Just(0.25), Just(0.5)],
            start in 0.0..1.0f64,
            extent in 0.0..1.0f64,
        ) {
            let p = params(size, overlap);
            let side = (extent * p.overlap_px() as f64).min(length as f64);
            let a = start * (length as f64 - side);
            let b = a + side;
            let slices = axis_slices(length, &p);
            prop_assert!(slices.iter().any(|&(s0, s1)| s0 as f64 <= a && b <= s1 as f64));
        }
    }
}
