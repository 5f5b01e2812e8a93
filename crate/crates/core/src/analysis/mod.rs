//! Post-hoc analysis: anomaly scores, causality matrices, anomaly-type
//! classification, root-cause ranking and evaluation metrics.

pub mod causality;
pub mod detect;
pub mod export;
pub mod metrics;
pub mod rca;
pub mod theorem;

pub use causality::{binarize_causality, causality_matrix, diff_matrix, median, Binarized};
pub use detect::{anomaly_scores, pick_threshold, DetectionReport, WindowScores};
pub use metrics::{accuracy, auroc, detection_metrics, topk_accuracy, topk_summary, DetectionMetrics, TopK};
pub use rca::{
    classify, localize, measurement_score, ranking, root_cause, root_cause_cyber, root_cause_measurement,
    top_m_concentration, Localization, MeasurementScore, RcaResult, DEFAULT_CUTOFF, DEFAULT_TOP_M,
};
pub use theorem::{theorem1_check, CheckStatus, Theorem1Report};
