//! Macro metrics, subject-level cross-validation, few-shot protocol,
//! multi-run reports and forecast export.

mod experiment;
mod export;
mod folds;
mod metrics;

pub use experiment::{
    cv_text, run_experiment, run_loocv, run_loocv_few_shot, CvResult, ExperimentReport, ExperimentSpec,
    FoldContext, FoldTrainer, FractionSummary, MeanStd, Pipeline, RunResult, SubjectPrediction, PLOT_HEADER,
};
pub use export::{export_forecasts, ExportedForecast, ROLE_INPUT, ROLE_PREDICTION, ROLE_TRUTH};
pub use folds::{
    few_shot_sample, few_shot_target, few_shot_videos, plan_loocv, plan_loocv_subjects, subject_label,
    videos_from_clips, videos_from_entries, Fold, FoldPlan, Video, FEW_SHOT_FRACTIONS,
};
pub use metrics::{aggregate_subject, argmax, confusion_matrix, macro_metrics, mean_logits, mean_std, MacroMetrics};
