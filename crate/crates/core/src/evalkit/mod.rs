//! Depth and segmentation metrics, cross-dataset class mappings, reports.

pub mod mapping;
pub mod metrics;
pub mod report;

pub use mapping::{map_classes, ClassMapping};
pub use metrics::{
    depth_metrics, median, seg_metrics, ConfusionMatrix, DepthAccumulator, DepthMetrics, SegMetrics, DEPTH_CAP_FAR,
    DEPTH_CAP_NEAR,
};
pub use report::{
    emit_report, read_summary, reports_from_records, QualitativeSample, ReportFiles, RunMeta, RunReport, SummaryRecord,
    MARKDOWN_FILE, SUMMARY_FILE,
};
