use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrCurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Cumulative precision/recall after each distinct confidence level, highest
/// confidence first. Detections sharing a confidence enter the curve together.
pub fn pr_curve(scored: &[(f64, bool)], gt_count: usize) -> Vec<PrCurvePoint> {
    if gt_count == 0 {
        return Vec::new();
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(conf, is_tp)) in sorted.iter().enumerate() {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = sorted.get(i + 1).is_none_or(|next| next.0 != conf);
        if group_ends {
            points.push(PrCurvePoint {
                threshold: conf,
                precision: tp as f64 / (tp + fp) as f64,
                recall: tp as f64 / gt_count as f64,
            });
        }
    }
    points
}

/// Area under the monotone precision envelope (all-point interpolation).
///
/// Returns `None` when `gt_count` is zero; such classes are left out of mAP.
pub fn average_precision(scored: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let points = pr_curve(scored, gt_count);

    let mut envelope = vec![0.0; points.len()];
    let mut running = 0.0f64;
    for (k, p) in points.iter().enumerate().rev() {
        running = running.max(p.precision);
        envelope[k] = running;
    }

    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in points.iter().zip(envelope) {
        area += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    Some(area)
}

/// Unweighted mean of per-class AP, absent for an empty map.
pub fn mean_ap(per_class_ap: &BTreeMap<ClassId, f64>) -> Option<f64> {
    if per_class_ap.is_empty() {
        return None;
    }
    Some(per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64)
}
