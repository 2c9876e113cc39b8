use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ClassId, Detection, GroundTruth, PixelBox};

/// Intersection over union of two boxes; `0.0` when they are disjoint.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Outcome of matching one image's detections against its ground truths.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matched_pairs: Vec<MatchedPair>,
    pub per_class: BTreeMap<ClassId, Counts>,
    /// Ground-truth index matched by each detection, indexed like the input.
    #[serde(skip)]
    pub detection_matches: Vec<Option<usize>>,
}

impl MatchResult {
    pub fn is_true_positive(&self, detection: usize) -> bool {
        self.detection_matches.get(detection).is_some_and(|m| m.is_some())
    }
}

fn check_threshold(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {value}")))
    }
}

fn check_single_image(dets: &[Detection], gts: &[GroundTruth]) -> Result<()> {
    let mut ids = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()));
    if let Some(first) = ids.next() {
        if let Some(other) = ids.find(|id| *id != first) {
            return Err(Error::MixedImageIds {
                first: first.to_string(),
                other: other.to_string(),
            });
        }
    }
    Ok(())
}

/// Indices of `dets` ordered by confidence descending; ties keep input order.
pub(crate) fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Greedy confidence-ordered matching within a single image.
///
/// Each detection, highest confidence first, claims the unmatched ground truth
/// of the same class with the largest IoU at or above `iou_threshold`.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Result<MatchResult> {
    check_threshold("iou threshold", iou_threshold)?;
    check_single_image(dets, gts)?;

    let mut gt_taken = vec![false; gts.len()];
    let mut detection_matches = vec![None; dets.len()];
    let mut matched_pairs = Vec::new();

    for di in confidence_order(dets) {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] || gt.class != det.class {
                continue;
            }
            let v = iou(&det.bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, v)) = best {
            gt_taken[gi] = true;
            detection_matches[di] = Some(gi);
            matched_pairs.push(MatchedPair {
                detection: di,
                ground_truth: gi,
                iou: v,
            });
        }
    }

    let mut per_class: BTreeMap<ClassId, Counts> = BTreeMap::new();
    for (di, det) in dets.iter().enumerate() {
        let c = per_class.entry(det.class).or_default();
        if detection_matches[di].is_some() {
            c.tp += 1;
        } else {
            c.fp += 1;
        }
    }
    for (gi, gt) in gts.iter().enumerate() {
        if !gt_taken[gi] {
            per_class.entry(gt.class).or_default().fn_ += 1;
        }
    }

    let tp = matched_pairs.len();
    Ok(MatchResult {
        tp,
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
        matched_pairs,
        per_class,
        detection_matches,
    })
}

/// `tp / (tp + fp)`, absent when nothing was predicted.
pub fn precision(tp: usize, fp: usize) -> Option<f64> {
    let denom = tp + fp;
    (denom > 0).then(|| tp as f64 / denom as f64)
}

/// `tp / (tp + fn)`, absent when there was nothing to find.
pub fn recall(tp: usize, fn_: usize) -> Option<f64> {
    let denom = tp + fn_;
    (denom > 0).then(|| tp as f64 / denom as f64)
}

/// Harmonic mean of precision and recall, absent when both are zero.
pub fn f1(p: f64, r: f64) -> Option<f64> {
    let sum = p + r;
    (sum > 0.0).then(|| 2.0 * p * r / sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pb(x1: f64, y1: f64, x2: f64, y2: f64) -> PixelBox {
        PixelBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(class: ClassId, b: PixelBox, conf: f64) -> Detection {
        Detection::new("a", class, b, conf).unwrap()
    }

    fn gt(class: ClassId, b: PixelBox) -> GroundTruth {
        GroundTruth::new("a", class, b)
    }

    #[test]
    fn iou_cases() {
        let b = pb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&b, &pb(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&b, &pb(10.0, 0.0, 20.0, 10.0)), 0.0);
        assert!((iou(&b, &pb(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_detections_gives_all_false_negatives() {
        let gts = vec![gt(ClassId::Text, pb(0.0, 0.0, 5.0, 5.0)); 3];
        let m = match_detections(&[], &gts, 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 3));
    }

    #[test]
    fn detection_claims_highest_iou_ground_truth() {
        // Ground truths chosen so the detection overlaps them at IoU 0.8 and 0.6.
        let d = det(ClassId::Text, pb(0.0, 0.0, 100.0, 10.0), 0.9);
        let g_lo = gt(ClassId::Text, pb(0.0, 0.0, 60.0, 10.0));
        let g_hi = gt(ClassId::Text, pb(0.0, 0.0, 80.0, 10.0));
        assert!((iou(&d.bbox, &g_lo.bbox) - 0.6).abs() < 1e-12);
        assert!((iou(&d.bbox, &g_hi.bbox) - 0.8).abs() < 1e-12);
        let m = match_detections(&[d], &[g_lo, g_hi], 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 1));
        assert_eq!(m.matched_pairs[0].ground_truth, 1);
        assert!((m.matched_pairs[0].iou - 0.8).abs() < 1e-12);
    }

    #[test]
    fn higher_confidence_matches_first() {
        let g = gt(ClassId::Button, pb(0.0, 0.0, 10.0, 10.0));
        let weak = det(ClassId::Button, pb(0.0, 0.0, 10.0, 10.0), 0.3);
        let strong = det(ClassId::Button, pb(0.0, 0.0, 10.0, 9.0), 0.9);
        let m = match_detections(&[weak, strong], &[g], 0.5).unwrap();
        assert_eq!(m.detection_matches, vec![None, Some(0)]);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
    }

    #[test]
    fn class_mismatch_is_not_a_match() {
        let g = gt(ClassId::Text, pb(0.0, 0.0, 10.0, 10.0));
        let d = det(ClassId::Image, pb(0.0, 0.0, 10.0, 10.0), 0.9);
        let m = match_detections(&[d], &[g], 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
        assert_eq!(m.per_class[&ClassId::Image].fp, 1);
        assert_eq!(m.per_class[&ClassId::Text].fn_, 1);
    }

    #[test]
    fn mixed_image_ids_are_rejected() {
        let d = Detection::new("a", ClassId::Text, pb(0.0, 0.0, 1.0, 1.0), 0.5).unwrap();
        let g = GroundTruth::new("b", ClassId::Text, pb(0.0, 0.0, 1.0, 1.0));
        assert!(matches!(match_detections(&[d], &[g], 0.5), Err(Error::MixedImageIds { .. })));
        assert!(match_detections(&[], &[], 1.0).is_err());
    }

    #[test]
    fn ratios() {
        assert_eq!(precision(20, 0), Some(1.0));
        assert!((precision(25, 1).unwrap() - 0.9615).abs() < 1e-4);
        assert_eq!(precision(0, 0), None);
        assert!((recall(20, 10).unwrap() - 0.6667).abs() < 1e-4);
        assert!((recall(25, 5).unwrap() - 0.8333).abs() < 1e-4);
        assert_eq!(recall(0, 0), None);
    }

    #[test]
    fn f1_cases() {
        assert!((f1(0.957, 0.596).unwrap() - 0.735).abs() <= 1e-3);
        assert!((f1(0.955, 0.569).unwrap() - 0.713).abs() <= 1e-3);
        assert_eq!(f1(1.0, 1.0), Some(1.0));
        assert_eq!(f1(0.0, 0.0), None);
    }

    proptest::proptest! {
        #[test]
        fn f1_symmetric_and_bounded(p in 0.0..=1.0f64, r in 0.0..=1.0f64) {
            proptest::prop_assume!(p + r > 0.0);
            let a = f1(p, r).unwrap();
            proptest::prop_assert_eq!(a, f1(r, p).unwrap());
            proptest::prop_assert!(a <= (p + r) / 2.0 + 1e-12);
        }
    }
}
