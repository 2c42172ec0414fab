//! Threshold-free open-set metrics, closed-set accuracy, openness, and
//! report export.

mod metrics;
mod report;

pub use metrics::{auc_trapezoid, auroc, closed_acc, fpr95, fpr_at_tpr, openness, roc_curve, PositiveClass};
pub use report::{
    aggregate, histogram, make_report, read_scores_csv, write_histogram_json, write_report_json, write_scores_csv,
    AggregateReport, Histogram, MeanStd, MetricsReport, RunMeta, ScoredPrediction,
};
