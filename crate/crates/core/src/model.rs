//! Domain types shared by every module: detection classes, boxes in pixel and
//! normalized form, detections, ground truths and image metadata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking normalized box edges against `[0, 1]`.
pub const NORM_EDGE_TOLERANCE: f64 = 1e-6;

/// Slack allowed when checking pixel boxes against image bounds.
const PIXEL_EDGE_TOLERANCE: f64 = 1e-9;

/// One of the four CAPTCHA detection classes.
///
/// Integer codes are fixed: text=0, puzzle=1, image=2, button=3. Images that
/// contain no CAPTCHA carry an empty annotation list rather than a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassId {
    Text,
    Puzzle,
    Image,
    Button,
}

impl ClassId {
    pub const ALL: [ClassId; 4] = [ClassId::Text, ClassId::Puzzle, ClassId::Image, ClassId::Button];
    pub const COUNT: usize = 4;

    pub fn code(self) -> u8 {
        match self {
            ClassId::Text => 0,
            ClassId::Puzzle => 1,
            ClassId::Image => 2,
            ClassId::Button => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<ClassId> {
        ClassId::ALL.get(code as usize).copied()
    }

    pub fn index(self) -> usize {
        self.code() as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Text => "text",
            ClassId::Puzzle => "puzzle",
            ClassId::Image => "image",
            ClassId::Button => "button",
        }
    }

    pub fn from_name(name: &str) -> Option<ClassId> {
        ClassId::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassId::from_name(s).ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Axis-aligned box in pixel coordinates, `x1 < x2`, `y1 < y2`, all `>= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPixelBox")]
pub struct PixelBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

#[derive(Deserialize)]
struct RawPixelBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<RawPixelBox> for PixelBox {
    type Error = Error;

    fn try_from(raw: RawPixelBox) -> Result<Self> {
        PixelBox::new(raw.x1, raw.y1, raw.x2, raw.y2)
    }
}

impl PixelBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinate in {x1},{y1},{x2},{y2}")));
        }
        if x1 < 0.0 || y1 < 0.0 {
            return Err(Error::InvalidBox(format!("negative coordinate in {x1},{y1},{x2},{y2}")));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::DegenerateBox(format!("{x1},{y1},{x2},{y2}")));
        }
        Ok(PixelBox { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Shifts the box by `(dx, dy)`. Fails if the result leaves the
    /// non-negative quadrant.
    pub fn translate(&self, dx: f64, dy: f64) -> Result<PixelBox> {
        PixelBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    /// Intersection with another box, `None` when the overlap is empty.
    pub fn intersect(&self, other: &PixelBox) -> Option<PixelBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        PixelBox::new(x1, y1, x2, y2).ok()
    }

    pub fn contains(&self, other: &PixelBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x2 <= width as f64 + PIXEL_EDGE_TOLERANCE && self.y2 <= height as f64 + PIXEL_EDGE_TOLERANCE
    }
}

/// Normalized YOLO-style box: center and size as fractions of the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormBox")]
pub struct NormBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

#[derive(Deserialize)]
struct RawNormBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawNormBox> for NormBox {
    type Error = Error;

    fn try_from(raw: RawNormBox) -> Result<Self> {
        NormBox::new(raw.cx, raw.cy, raw.w, raw.h)
    }
}

impl NormBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if ![cx, cy, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite value in {cx},{cy},{w},{h}")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::DegenerateBox(format!("normalized size {w}x{h}")));
        }
        if w > 1.0 || h > 1.0 {
            return Err(Error::InvalidBox(format!("normalized size {w}x{h} exceeds 1")));
        }
        let t = NORM_EDGE_TOLERANCE;
        for (c, s, axis) in [(cx, w, "x"), (cy, h, "y")] {
            if c - s / 2.0 < -t || c + s / 2.0 > 1.0 + t {
                return Err(Error::InvalidBox(format!(
                    "normalized {axis} extent [{}, {}] leaves [0, 1]",
                    c - s / 2.0,
                    c + s / 2.0
                )));
            }
        }
        Ok(NormBox { cx, cy, w, h })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    RealWebpage,
    SyntheticComposite,
    CaptchaCrop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub source: ImageSource,
}

impl ImageMeta {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32, source: ImageSource) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidBox(format!("image size {width}x{height} must be positive")));
        }
        Ok(ImageMeta {
            image_id: image_id.into(),
            width,
            height,
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class: ClassId,
    pub bbox: PixelBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, class: ClassId, bbox: PixelBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidBox(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Detection {
            image_id: image_id.into(),
            class,
            bbox,
            confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class: ClassId,
    pub bbox: PixelBox,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, class: ClassId, bbox: PixelBox) -> Self {
        GroundTruth {
            image_id: image_id.into(),
            class,
            bbox,
        }
    }
}

/// Converts a pixel box to normalized center/size form.
pub fn to_norm(bbox: &PixelBox, meta: &ImageMeta) -> Result<NormBox> {
    if !bbox.fits_in(meta.width, meta.height) {
        return Err(Error::OutOfBounds {
            x1: bbox.x1,
            y1: bbox.y1,
            x2: bbox.x2,
            y2: bbox.y2,
            width: meta.width,
            height: meta.height,
        });
    }
    let (w, h) = (meta.width as f64, meta.height as f64);
    NormBox::new(
        (bbox.x1 + bbox.x2) / (2.0 * w),
        (bbox.y1 + bbox.y2) / (2.0 * h),
        bbox.width() / w,
        bbox.height() / h,
    )
}

/// Inverse of [`to_norm`]. Edges that land within rounding distance outside
/// the image are clamped back onto it.
pub fn to_pixel(bbox: &NormBox, meta: &ImageMeta) -> Result<PixelBox> {
    if bbox.w <= 0.0 || bbox.h <= 0.0 {
        return Err(Error::DegenerateBox(format!("normalized size {}x{}", bbox.w, bbox.h)));
    }
    let (w, h) = (meta.width as f64, meta.height as f64);
    let x1 = ((bbox.cx - bbox.w / 2.0) * w).clamp(0.0, w);
    let y1 = ((bbox.cy - bbox.h / 2.0) * h).clamp(0.0, h);
    let x2 = ((bbox.cx + bbox.w / 2.0) * w).clamp(0.0, w);
    let y2 = ((bbox.cy + bbox.h / 2.0) * h).clamp(0.0, h);
    PixelBox::new(x1, y1, x2, y2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(w: u32, h: u32) -> ImageMeta {
        ImageMeta::new("img", w, h, ImageSource::RealWebpage).unwrap()
    }

    fn pb(x1: f64, y1: f64, x2: f64, y2: f64) -> PixelBox {
        PixelBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn class_codes_are_fixed() {
        let codes: Vec<u8> = ClassId::ALL.iter().map(|c| c.code()).collect();
        assert_eq!(codes, vec![0, 1, 2, 3]);
        assert_eq!(ClassId::from_code(3), Some(ClassId::Button));
        assert_eq!(ClassId::from_code(4), None);
        assert_eq!("puzzle".parse::<ClassId>().unwrap(), ClassId::Puzzle);
        assert!("captcha".parse::<ClassId>().is_err());
        assert_eq!(serde_json::to_string(&ClassId::Image).unwrap(), "\"image\"");
    }

    #[test]
    fn full_frame_box_normalizes_to_unit() {
        let n = to_norm(&pb(0.0, 0.0, 100.0, 100.0), &meta(100, 100)).unwrap();
        assert_eq!((n.cx(), n.cy(), n.w(), n.h()), (0.5, 0.5, 1.0, 1.0));
    }

    #[test]
    fn centered_box_normalizes() {
        let n = to_norm(&pb(25.0, 45.0, 75.0, 55.0), &meta(100, 100)).unwrap();
        assert!((n.cx() - 0.5).abs() < 1e-12);
        assert!((n.cy() - 0.5).abs() < 1e-12);
        assert!((n.w() - 0.5).abs() < 1e-12);
        assert!((n.h() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_box_is_rejected() {
        let err = to_norm(&pb(50.0, 0.0, 101.0, 10.0), &meta(100, 100)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { .. }));
    }

    #[test]
    fn unit_box_denormalizes_to_full_frame() {
        let p = to_pixel(&NormBox::new(0.5, 0.5, 1.0, 1.0).unwrap(), &meta(200, 100)).unwrap();
        assert_eq!(p, pb(0.0, 0.0, 200.0, 100.0));
    }

    #[test]
    fn label_line_denormalizes() {
        let n = NormBox::new(0.5, 0.5, 0.25, 0.1).unwrap();
        let p = to_pixel(&n, &meta(640, 480)).unwrap();
        for (got, want) in [(p.x1(), 240.0), (p.y1(), 216.0), (p.x2(), 400.0), (p.y2(), 264.0)] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        assert!(matches!(NormBox::new(0.5, 0.5, 0.0, 0.1), Err(Error::DegenerateBox(_))));
        assert!(matches!(PixelBox::new(1.0, 1.0, 1.0, 2.0), Err(Error::DegenerateBox(_))));
        assert!(PixelBox::new(-1.0, 0.0, 1.0, 2.0).is_err());
        assert!(NormBox::new(0.1, 0.5, 0.4, 0.1).is_err());
    }

    #[test]
    fn deserialization_validates() {
        assert!(serde_json::from_str::<PixelBox>(r#"{"x1":5,"y1":0,"x2":1,"y2":3}"#).is_err());
        let b: PixelBox = serde_json::from_str(r#"{"x1":1,"y1":0,"x2":5,"y2":3}"#).unwrap();
        assert_eq!(b.width(), 4.0);
    }

    fn box_and_image() -> impl Strategy<Value = (PixelBox, ImageMeta)> {
        (1u32..5000, 1u32..5000)
            .prop_flat_map(|(w, h)| {
                (
                    Just((w, h)),
                    0.0..1.0f64,
                    0.0..1.0f64,
                    0.0..1.0f64,
                    0.0..1.0f64,
                )
            })
            .prop_filter_map("degenerate", |((w, h), a, b, c, d)| {
                let (x1, x2) = (a.min(b) * w as f64, a.max(b) * w as f64);
                let (y1, y2) = (c.min(d) * h as f64, c.max(d) * h as f64);
                let bbox = PixelBox::new(x1, y1, x2, y2).ok()?;
                if bbox.width() < 1e-3 || bbox.height() < 1e-3 {
                    return None;
                }
                Some((bbox, meta(w, h)))
            })
    }

    proptest! {
        #[test]
        fn norm_pixel_round_trip((bbox, m) in box_and_image()) {
            let back = to_pixel(&to_norm(&bbox, &m).unwrap(), &m).unwrap();
            prop_assert!((back.x1() - bbox.x1()).abs() < 1e-6);
            prop_assert!((back.y1() - bbox.y1()).abs() < 1e-6);
            prop_assert!((back.x2() - bbox.x2()).abs() < 1e-6);
            prop_assert!((back.y2() - bbox.y2()).abs() < 1e-6);
        }
    }
}
