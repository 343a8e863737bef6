//! OKS-based keypoint evaluation.

mod io;
mod metrics;
mod oks;
mod types;

pub use io::{
    annotations_to_json, detections_to_json, load_annotations, load_detections, parse_annotations,
    parse_detections, write_detections, ImageInfo,
};
pub use metrics::{
    compute_metrics, match_instances, oks_thresholds, EvalResult, Matching, ThresholdMetrics,
    MAX_DETECTIONS, MEDIUM_AREA, RECALL_POINTS,
};
pub use oks::compute_oks;
pub use types::{DetInstance, GtInstance, OksConstants};
