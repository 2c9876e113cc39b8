//! Dataset-level aggregation of per-image match results into a
//! [`MetricsReport`].
//!
//! Per-image work produces an [`ImageTally`]; tallies are absorbed in image
//! order by a [`MetricsAccumulator`], and metrics are computed once at the end.
//! Tallies only hold counts and scored-detection lists, so the reduction is a
//! concatenation and does not depend on which worker produced which tally.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ap::{average_precision, mean_ap, pr_curve, PrCurvePoint};
use super::confusion::{confusion_matrix, ConfusionMatrix};
use super::matching::{f1, match_detections, precision, recall, Counts};
use crate::error::Result;
use crate::model::{ClassId, Detection, GroundTruth};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything one image contributes to the final report.
#[derive(Debug, Clone, Default)]
pub struct ImageTally {
    scored: [Vec<(f64, bool)>; 4],
    gt_counts: [usize; 4],
    counts: [Counts; 4],
    confusion: ConfusionMatrix,
    pub detector_calls: usize,
    pub inference_ms: f64,
    pub wall_ms: f64,
    pub sliced: bool,
}

impl ImageTally {
    /// Matches one image's final detections against its ground truths.
    ///
    /// AP uses every detection; TP/FP/FN counts and the confusion matrix only
    /// use detections at or above `confidence_threshold`.
    pub fn new(
        dets: &[Detection],
        gts: &[GroundTruth],
        match_iou: f64,
        confidence_threshold: f64,
    ) -> Result<Self> {
        let m = match_detections(dets, gts, match_iou)?;
        let mut tally = ImageTally {
            confusion: confusion_matrix(dets, gts, match_iou, confidence_threshold),
            ..Default::default()
        };
        for g in gts {
            tally.gt_counts[g.class.index()] += 1;
        }
        let mut tp_at_threshold = [0usize; 4];
        for (i, d) in dets.iter().enumerate() {
            let c = d.class.index();
            let is_tp = m.is_true_positive(i);
            tally.scored[c].push((d.confidence, is_tp));
            if d.confidence >= confidence_threshold {
                if is_tp {
                    tp_at_threshold[c] += 1;
                } else {
                    tally.counts[c].fp += 1;
                }
            }
        }
        for ((counts, tp), gt) in tally.counts.iter_mut().zip(tp_at_threshold).zip(tally.gt_counts) {
            counts.tp = tp;
            counts.fn_ = gt - tp;
        }
        Ok(tally)
    }

    pub fn annotation_count(&self) -> usize {
        self.gt_counts.iter().sum()
    }

    pub fn counts(&self) -> Counts {
        let mut total = Counts::default();
        for c in &self.counts {
            total.add(c);
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub gt_count: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub map50: Option<f64>,
    /// Classes whose AP enters `map50`: those present in the ground truth.
    pub map_classes: Vec<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub detector_calls: usize,
    /// Sum of detector self-reported inference time.
    pub total_inference_ms: f64,
    /// Mean self-reported inference time per evaluated image.
    pub mean_inference_ms_per_image: Option<f64>,
    pub mean_inference_ms_per_call: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub images: usize,
    pub evaluated_images: usize,
    pub failed_images: usize,
    pub annotations: usize,
    pub sliced_images: usize,
}

/// Values that legitimately differ between otherwise identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub created_unix_s: Option<u64>,
    pub mean_wall_ms_per_image: Option<f64>,
    pub environment: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub per_class: BTreeMap<ClassId, ClassMetrics>,
    pub aggregate: AggregateMetrics,
    pub confusion_matrix: ConfusionMatrix,
    pub timing_ms: TimingStats,
    pub counts: ReportCounts,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pr_curves: Option<BTreeMap<ClassId, Vec<PrCurvePoint>>>,
    pub config: serde_json::Value,
    pub run_metadata: RunMetadata,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    scored: [Vec<(f64, bool)>; 4],
    gt_counts: [usize; 4],
    counts: [Counts; 4],
    confusion: ConfusionMatrix,
    images: usize,
    sliced_images: usize,
    detector_calls: usize,
    inference_ms: f64,
    wall_ms: f64,
    failures: Vec<String>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        MetricsAccumulator {
            confusion: ConfusionMatrix::new(),
            ..Default::default()
        }
    }

    pub fn absorb(&mut self, tally: ImageTally) {
        for c in 0..4 {
            self.scored[c].extend_from_slice(&tally.scored[c]);
            self.gt_counts[c] += tally.gt_counts[c];
            self.counts[c].add(&tally.counts[c]);
        }
        self.confusion.add(&tally.confusion);
        self.images += 1;
        self.sliced_images += usize::from(tally.sliced);
        self.detector_calls += tally.detector_calls;
        self.inference_ms += tally.inference_ms;
        self.wall_ms += tally.wall_ms;
    }

    pub fn record_failure(&mut self, image_id: &str, reason: &str) {
        self.failures.push(format!("{image_id}: {reason}"));
    }

    pub fn finish(self, config: serde_json::Value, with_curves: bool) -> MetricsReport {
        let mut per_class = BTreeMap::new();
        let mut ap_map = BTreeMap::new();
        let mut curves = BTreeMap::new();
        let mut total = Counts::default();
        for class in ClassId::ALL {
            let c = class.index();
            let counts = self.counts[c];
            total.add(&counts);
            let ap = average_precision(&self.scored[c], self.gt_counts[c]);
            if let Some(ap) = ap {
                ap_map.insert(class, ap);
            }
            if with_curves {
                curves.insert(class, pr_curve(&self.scored[c], self.gt_counts[c]));
            }
            let p = precision(counts.tp, counts.fp);
            let r = recall(counts.tp, counts.fn_);
            per_class.insert(
                class,
                ClassMetrics {
                    gt_count: self.gt_counts[c],
                    tp: counts.tp,
                    fp: counts.fp,
                    fn_: counts.fn_,
                    precision: p,
                    recall: r,
                    f1: p.zip(r).and_then(|(p, r)| f1(p, r)),
                    ap,
                },
            );
        }

        let p = precision(total.tp, total.fp);
        let r = recall(total.tp, total.fn_);
        let evaluated = self.images;
        let per_image = |v: f64| (evaluated > 0).then(|| v / evaluated as f64);
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            per_class,
            aggregate: AggregateMetrics {
                tp: total.tp,
                fp: total.fp,
                fn_: total.fn_,
                precision: p,
                recall: r,
                f1: p.zip(r).and_then(|(p, r)| f1(p, r)),
                map50: mean_ap(&ap_map),
                map_classes: ap_map.keys().copied().collect(),
            },
            confusion_matrix: self.confusion,
            timing_ms: TimingStats {
                detector_calls: self.detector_calls,
                total_inference_ms: self.inference_ms,
                mean_inference_ms_per_image: per_image(self.inference_ms),
                mean_inference_ms_per_call: (self.detector_calls > 0)
                    .then(|| self.inference_ms / self.detector_calls as f64),
            },
            counts: ReportCounts {
                images: evaluated + self.failures.len(),
                evaluated_images: evaluated,
                failed_images: self.failures.len(),
                annotations: self.gt_counts.iter().sum(),
                sliced_images: self.sliced_images,
            },
            failures: self.failures,
            pr_curves: with_curves.then_some(curves),
            config,
            run_metadata: RunMetadata {
                mean_wall_ms_per_image: per_image(self.wall_ms),
                ..Default::default()
            },
        }
    }
}
