use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::folds::{few_shot_videos, subject_label, videos_from_clips, FoldPlan};
use super::metrics::{argmax, macro_metrics, mean_logits, mean_std, MacroMetrics};
use crate::data::LabeledClip;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::model::{predict_logits, ModelConfig, ModelParams};
use crate::training::{finetune, train_scratch, Checkpoint, TrainConfig};

/// What a fold's trainer is allowed to see.
#[derive(Clone, Debug)]
pub struct FoldContext<'a> {
    pub fold: usize,
    pub test_subject: &'a str,
    /// Clips of the (possibly subsampled) training subjects only.
    pub train_clips: Vec<LabeledClip>,
    pub classes: usize,
}

/// Turns one fold's training clips into parameters.
pub trait FoldTrainer {
    fn train(&mut self, ctx: &FoldContext) -> Result<ModelParams>;
}

impl<F> FoldTrainer for F
where
    F: FnMut(&FoldContext) -> Result<ModelParams>,
{
    fn train(&mut self, ctx: &FoldContext) -> Result<ModelParams> {
        self(ctx)
    }
}

/// Ready-made trainers for the cross-validation harness.
#[derive(Clone, Debug)]
pub enum Pipeline {
    /// Random initialization, trained with `train_scratch`.
    Scratch { model: ModelConfig, train: TrainConfig },
    /// Fine-tuning from a pre-trained checkpoint.
    Finetune { init: Box<Checkpoint>, train: TrainConfig },
}

impl Pipeline {
    pub fn echo(&self) -> Vec<(String, String)> {
        let (kind, model, train) = match self {
            Pipeline::Scratch { model, train } => ("scratch", model.clone(), train),
            Pipeline::Finetune { init, train } => ("finetune", init.config().clone(), train),
        };
        let mut out = vec![("pipeline".to_string(), kind.to_string())];
        out.extend(model.echo().into_iter().map(|(k, v)| (format!("model.{k}"), v)));
        out.extend(train.echo().into_iter().map(|(k, v)| (format!("train.{k}"), v)));
        out
    }
}

impl FoldTrainer for Pipeline {
    fn train(&mut self, ctx: &FoldContext) -> Result<ModelParams> {
        let ck = match self {
            Pipeline::Scratch { model, train } => {
                let mut model = model.clone();
                model.classes = ctx.classes;
                train_scratch(&ctx.train_clips, &model, train, None)?
            }
            Pipeline::Finetune { init, train } => finetune(init, &ctx.train_clips, ctx.classes, train, None)?,
        };
        Ok(ck.params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectPrediction {
    pub fold: usize,
    pub subject_id: String,
    pub label: usize,
    pub predicted: usize,
    pub mean_logits: Vec<f64>,
    pub clips: usize,
}

/// Pooled subject-level predictions of every fold and their metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub predictions: Vec<SubjectPrediction>,
    pub metrics: MacroMetrics,
}

/// Which training subjects a fold keeps.
type SubjectFilter<'s> = dyn FnMut(usize, &[LabeledClip]) -> Result<Vec<String>> + 's;

fn clip_input(clip: &LabeledClip, cfg: &ModelConfig) -> Result<Tensor> {
    let t = cfg.input_frames;
    let p = &clip.poses;
    if p.frames() < t || p.dim() != cfg.pose_dim {
        return Err(Error::invalid(format!(
            "clip of subject {} ({} frames, dimension {}) does not fit a model with t={t}, N={}",
            clip.subject_id,
            p.frames(),
            p.dim(),
            cfg.pose_dim
        )));
    }
    Tensor::matrix(t, p.dim(), p.data()[..t * p.dim()].to_vec())
}

fn run_folds(
    clips: &[LabeledClip],
    classes: usize,
    plan: &FoldPlan,
    trainer: &mut dyn FoldTrainer,
    filter: &mut SubjectFilter<'_>,
) -> Result<CvResult> {
    let mut predictions = Vec::with_capacity(plan.len());
    for (fold, f) in plan.folds.iter().enumerate() {
        let test: Vec<&LabeledClip> = clips.iter().filter(|c| c.subject_id == f.test_subject).collect();
        if test.is_empty() {
            return Err(Error::invalid(format!("fold subject {} has no clips", f.test_subject)));
        }
        let train_side: Vec<LabeledClip> = clips
            .iter()
            .filter(|c| c.subject_id != f.test_subject && f.train_subjects.contains(&c.subject_id))
            .cloned()
            .collect();
        let keep = filter(fold, &train_side)?;
        let train_clips: Vec<LabeledClip> = train_side
            .into_iter()
            .filter(|c| keep.contains(&c.subject_id))
            .collect();
        let ctx = FoldContext {
            fold,
            test_subject: &f.test_subject,
            train_clips,
            classes,
        };
        let params = trainer.train(&ctx)?;
        let logits = test
            .iter()
            .map(|c| predict_logits(&clip_input(c, params.config())?, &params))
            .collect::<Result<Vec<_>>>()?;
        let mean = mean_logits(&logits)?;
        predictions.push(SubjectPrediction {
            fold,
            subject_id: f.test_subject.clone(),
            label: subject_label(test.iter().map(|c| c.label)).expect("non-empty"),
            predicted: argmax(&mean),
            mean_logits: mean,
            clips: test.len(),
        });
    }
    let preds: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    let labels: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let metrics = macro_metrics(&preds, &labels, classes)?;
    Ok(CvResult { predictions, metrics })
}

/// Leave-one-subject-out evaluation. The trainer only ever receives clips of
/// the fold's training subjects; predictions are pooled across folds before
/// computing metrics.
pub fn run_loocv(
    clips: &[LabeledClip],
    classes: usize,
    plan: &FoldPlan,
    trainer: &mut dyn FoldTrainer,
) -> Result<CvResult> {
    run_folds(clips, classes, plan, trainer, &mut |_, train: &[LabeledClip]| {
        Ok(train.iter().map(|c| c.subject_id.clone()).collect())
    })
}

/// Cross-validation where each fold trains on a few-shot subsample of its
/// training subjects. The test side of every fold is left intact.
pub fn run_loocv_few_shot(
    clips: &[LabeledClip],
    classes: usize,
    plan: &FoldPlan,
    fraction: f64,
    sampling_seed: u64,
    trainer: &mut dyn FoldTrainer,
) -> Result<CvResult> {
    run_folds(clips, classes, plan, trainer, &mut |fold, train: &[LabeledClip]| {
        let seed = sampling_seed.wrapping_mul(1_000_003).wrapping_add(fold as u64);
        let chosen = few_shot_videos(&videos_from_clips(train), classes, fraction, seed)?;
        Ok(chosen.into_iter().map(|v| v.subject_id).collect())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub fractions: Vec<f64>,
    pub runs: usize,
    /// Base seed of the few-shot sampler; run `r` uses `sampling_seed + r`.
    pub sampling_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub fraction: f64,
    pub run: usize,
    pub sampling_seed: u64,
    pub cv: CvResult,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractionSummary {
    pub fraction: f64,
    pub f1: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config_echo: Vec<(String, String)>,
    pub runs: Vec<RunResult>,
    pub summary: Vec<FractionSummary>,
}

pub const PLOT_HEADER: &str = "fraction,run,f1,precision,recall";

impl ExperimentReport {
    /// Comma-separated per-run metrics for plotting.
    pub fn plot_csv(&self) -> String {
        let mut out = format!("{PLOT_HEADER}\n");
        for r in &self.runs {
            let m = r.cv.metrics;
            let _ = writeln!(out, "{},{},{:?},{:?},{:?}", r.fraction, r.run, m.f1, m.precision, m.recall);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("[config]\n");
        for (k, v) in &self.config_echo {
            let _ = writeln!(out, "{k}={v}");
        }
        for r in &self.runs {
            let _ = writeln!(
                out,
                "\n[run fraction={} run={} sampling_seed={}]",
                r.fraction, r.run, r.sampling_seed
            );
            out.push_str(&cv_text(&r.cv));
        }
        out.push_str("\n[summary]\nfraction\tf1_mean\tf1_std\tprecision_mean\tprecision_std\trecall_mean\trecall_std\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                s.fraction, s.f1.mean, s.f1.std, s.precision.mean, s.precision.std, s.recall.mean, s.recall.std
            );
        }
        out
    }
}

/// Per-fold predictions and pooled metrics as report text.
pub fn cv_text(cv: &CvResult) -> String {
    let mut out = String::from("fold\tsubject\tlabel\tpredicted\tclips\n");
    for p in &cv.predictions {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", p.fold, p.subject_id, p.label, p.predicted, p.clips);
    }
    let m = cv.metrics;
    let _ = writeln!(out, "macro_f1={:?}\nmacro_precision={:?}\nmacro_recall={:?}", m.f1, m.precision, m.recall);
    out
}

/// Runs `spec.runs` cross-validation sweeps per fraction with fresh sampling
/// seeds; training settings (and therefore training seeds) stay fixed.
pub fn run_experiment(
    clips: &[LabeledClip],
    classes: usize,
    plan: &FoldPlan,
    spec: &ExperimentSpec,
    config_echo: Vec<(String, String)>,
    trainer: &mut dyn FoldTrainer,
) -> Result<ExperimentReport> {
    if spec.runs == 0 || spec.fractions.is_empty() {
        return Err(Error::invalid("experiment needs at least one run and one fraction"));
    }
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for &fraction in &spec.fractions {
        let mut per_run: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for run in 0..spec.runs {
            let sampling_seed = spec.sampling_seed.wrapping_add(run as u64);
            let cv = run_loocv_few_shot(clips, classes, plan, fraction, sampling_seed, trainer)?;
            per_run.entry("f1").or_default().push(cv.metrics.f1);
            per_run.entry("precision").or_default().push(cv.metrics.precision);
            per_run.entry("recall").or_default().push(cv.metrics.recall);
            runs.push(RunResult {
                fraction,
                run,
                sampling_seed,
                cv,
            });
        }
        let ms = |k: &str| {
            let (mean, std) = mean_std(&per_run[k]);
            MeanStd { mean, std }
        };
        summary.push(FractionSummary {
            fraction,
            f1: ms("f1"),
            precision: ms("precision"),
            recall: ms("recall"),
        });
    }
    let mut echo = config_echo;
    echo.push((
        "experiment.fractions".into(),
        spec.fractions.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(","),
    ));
    echo.push(("experiment.runs".into(), spec.runs.to_string()));
    echo.push(("experiment.sampling_seed".into(), spec.sampling_seed.to_string()));
    Ok(ExperimentReport {
        config_echo: echo,
        runs,
        summary,
    })
}
