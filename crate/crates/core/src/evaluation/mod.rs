//! NMSE and cosine-correlation metrics, SNR sweeps over trained bundles and
//! report emission.

mod metrics;
mod report;

pub use metrics::{
    cosine_correlation, nmse, nmse_ratio, nmse_set, to_db, truncated_nmse_accumulate, truncated_nmse_db, Aggregation,
    NmseAccumulator, NMSE_FLOOR,
};
pub use report::{
    emit_report, evaluate_bundle, render_curve_data, render_rows, EvalSettings, FeedbackChain, FullReference,
    MetricsRecord, MetricsReport, ReferenceMode, ReportFormat, ROWS_HEADER,
};
