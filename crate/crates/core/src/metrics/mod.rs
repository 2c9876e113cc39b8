//! Matching, precision/recall/F1, average precision, confusion matrices and
//! weighted model ranking.

mod ap;
mod confusion;
mod matching;
mod rank;
mod report;

pub use ap::{average_precision, mean_ap, pr_curve, PrCurvePoint};
pub use confusion::{confusion_matrix, ConfusionMatrix, BACKGROUND, LABELS};
pub use matching::{f1, iou, match_detections, precision, recall, Counts, MatchResult, MatchedPair};
pub(crate) use matching::confidence_order;
pub use rank::{rank_models, ModelScoreRow, RankWeights, RankedModel};
pub use report::{
    AggregateMetrics, ClassMetrics, ImageTally, MetricsAccumulator, MetricsReport, ReportCounts, RunMetadata,
    TimingStats, REPORT_SCHEMA_VERSION,
};
