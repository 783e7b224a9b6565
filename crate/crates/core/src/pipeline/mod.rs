//! Cascade and unified species pipelines, the two-stage flock classifier,
//! robustness sweeps and the data/colour/resolution experiments.

mod cascade;
mod flock;
mod insights;
mod sweep;

pub use cascade::{
    analytic_cca_accuracy, cca_predict, evaluate_cascade, evaluate_unified, uca_predict, CascadeModel, DynClassifier,
    PipelineReport, PriorMode, RoutingTrace, StageStats, TraceRow, UnifiedModel, UnifiedReport,
};
pub use flock::{
    evaluate_flock_cascade, flock_cascade_predict, FlockCascade, FlockCascadeReport, FlockCase, FlockPrediction,
};
pub use insights::{
    insight_sweeps, ColorModeRow, InsightConfig, InsightTables, LabelledSet, ResolutionRow, TrainSizeRow,
};
pub use sweep::{accuracy, image_seed, robustness_sweep, SweepRow, SweepTable};

/// End-to-end accuracy reported for the unified classifier in the reference study.
pub const REFERENCE_UNIFIED_ACCURACY: f64 = 92.80;
