//! Confusion counts, classification metrics and the accuracy–parameter
//! trade-off (APT) score.

pub mod metrics;
pub mod report;

pub use metrics::{apt, confusion, metrics, ConfusionMatrix, Metric, MetricsReport, Scores};
pub use report::{
    apt_series, emit_report, load_external_models, load_trace, performance_table, read_trace, save_trace,
    write_trace, AptPoint, ExternalModel, FoldEvaluation, ReportSummary, TraceRow,
};
