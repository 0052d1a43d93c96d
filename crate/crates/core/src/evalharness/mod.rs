//! Scoring, error analysis and experiment runners.

pub mod errors;
pub mod experiment;
pub mod metrics;

pub use errors::{categorize, categorize_errors, ErrorBreakdown, ErrorCategory};
pub use experiment::{
    fold_assignment, kfold, run_experiment, run_pipeline, ExperimentReport, ExperimentRow, ExperimentRun,
    FinetuneConfig, FoldRun, KFoldReport, PipelineConfig, PipelineRun, Summary,
};
pub use metrics::{
    component_match, component_matching, evaluate, ex_match, execution_accuracy, lf_match, logical_form_accuracy,
    score_dataset, Component, LfMode, MetricReport, PairScore, Slice,
};
