use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::iou;
use crate::model::{ClassId, Detection, GroundTruth};

pub const BACKGROUND: usize = ClassId::COUNT;
pub const LABELS: [&str; 5] = ["text", "puzzle", "image", "button", "background"];

/// 5x5 matrix indexed `[predicted][true]`, with background as the last
/// row/column. Rows and columns follow [`LABELS`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub cells: [[u64; 5]; 5],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        ConfusionMatrix {
            labels: LABELS.iter().map(|s| s.to_string()).collect(),
            cells: [[0; 5]; 5],
        }
    }

    pub fn get(&self, predicted: Option<ClassId>, truth: Option<ClassId>) -> u64 {
        self.cells[slot(predicted)][slot(truth)]
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.cells.iter_mut().zip(other.cells.iter()) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    /// Column sums over real classes: the ground-truth count per class.
    pub fn truth_totals(&self) -> [u64; 4] {
        let mut out = [0; 4];
        for (c, total) in out.iter_mut().enumerate() {
            *total = self.cells.iter().map(|row| row[c]).sum();
        }
        out
    }

    pub fn is_diagonal(&self) -> bool {
        self.cells
            .iter()
            .enumerate()
            .all(|(r, row)| row.iter().enumerate().all(|(c, &v)| r == c || v == 0))
    }

    fn bump(&mut self, predicted: Option<ClassId>, truth: Option<ClassId>) {
        self.cells[slot(predicted)][slot(truth)] += 1;
    }
}

fn slot(class: Option<ClassId>) -> usize {
    class.map_or(BACKGROUND, ClassId::index)
}

/// Class-agnostic matching followed by tallying (predicted, true) pairs.
///
/// Detections below `confidence_threshold` are dropped. Each remaining
/// detection, highest confidence first, claims the unmatched ground truth with
/// the largest IoU at or above `iou_threshold` regardless of class. Inputs may
/// span several images; matching never crosses image ids.
pub fn confusion_matrix(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
    confidence_threshold: f64,
) -> ConfusionMatrix {
    let mut by_image: BTreeMap<&str, (Vec<&Detection>, Vec<&GroundTruth>)> = BTreeMap::new();
    for d in dets.iter().filter(|d| d.confidence >= confidence_threshold) {
        by_image.entry(&d.image_id).or_default().0.push(d);
    }
    for g in gts {
        by_image.entry(&g.image_id).or_default().1.push(g);
    }

    let mut matrix = ConfusionMatrix::new();
    for (mut image_dets, image_gts) in by_image.into_values() {
        image_dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        let mut taken = vec![false; image_gts.len()];
        for d in image_dets {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in image_gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let v = iou(&d.bbox, &g.bbox);
                if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            match best {
                Some((gi, _)) => {
                    taken[gi] = true;
                    matrix.bump(Some(d.class), Some(image_gts[gi].class));
                }
                None => matrix.bump(Some(d.class), None),
            }
        }
        for (gi, g) in image_gts.iter().enumerate() {
            if !taken[gi] {
                matrix.bump(None, Some(g.class));
            }
        }
    }
    matrix
}
