use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, EpochRecord};
use super::optim::{AdamW, AdamWConfig};
use crate::data::LabeledClip;
use crate::diff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{register_params, Graph, ModelConfig, ModelParams, ParamGroup};
use crate::objectives::{combined_loss_var, inverse_frequency_weights, ClassWeights, LossBreakdown, LossMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Pretrain,
    Scratch,
    /// Classification head only, under `L_c`.
    FineClass,
    /// Every parameter under `L_c + L_f`.
    FineBoth,
    /// `FineBoth` for the first stage, then `FineClass`.
    FineBothThenClass,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Pretrain => "pretrain",
            Strategy::Scratch => "scratch",
            Strategy::FineClass => "class",
            Strategy::FineBoth => "both",
            Strategy::FineBothThenClass => "both-then-class",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Strategy::Pretrain),
            "scratch" => Ok(Strategy::Scratch),
            "class" | "fine_class" => Ok(Strategy::FineClass),
            "both" | "fine_both" => Ok(Strategy::FineBoth),
            "both-then-class" | "fine_both_then_class" => Ok(Strategy::FineBothThenClass),
            other => Err(Error::invalid(format!(
                "unknown strategy {other:?} (expected pretrain, scratch, class, both, both-then-class)"
            ))),
        }
    }

    pub fn is_finetune(self) -> bool {
        matches!(
            self,
            Strategy::FineClass | Strategy::FineBoth | Strategy::FineBothThenClass
        )
    }

    /// Epochs used when a run does not override them.
    pub fn default_epochs(self) -> usize {
        match self {
            Strategy::Scratch => 200,
            _ => 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassWeighting {
    Uniform,
    /// Inverse class frequency of the training split.
    InverseFrequency,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    /// Epochs of the both-branch and class-branch stages for `FineBothThenClass`.
    pub stage_split: Option<(usize, usize)>,
    /// Lets the class-branch stage also update the encoder and pose embedding.
    pub class_stage_trains_encoder: bool,
    pub weighting: ClassWeighting,
}

impl TrainConfig {
    pub fn new(strategy: Strategy) -> Self {
        let epochs = strategy.default_epochs();
        TrainConfig {
            strategy,
            epochs,
            batch_size: 16,
            seed: 0,
            optimizer: AdamWConfig::default(),
            stage_split: (strategy == Strategy::FineBothThenClass).then_some((epochs / 2, epochs - epochs / 2)),
            class_stage_trains_encoder: false,
            weighting: if strategy == Strategy::Pretrain {
                ClassWeighting::Uniform
            } else {
                ClassWeighting::InverseFrequency
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.optimizer.learning_rate.is_finite() && self.optimizer.learning_rate > 0.0) {
            problems.push(format!("learning_rate {} must be positive", self.optimizer.learning_rate));
        }
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        match (self.strategy, self.stage_split) {
            (Strategy::FineBothThenClass, Some((a, b))) if a + b != self.epochs => {
                problems.push(format!("stage split {a}+{b} does not sum to epochs {}", self.epochs))
            }
            (Strategy::FineBothThenClass, None) => {
                problems.push("both-then-class needs a stage split".to_string())
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    /// Training phases in order.
    pub fn stages(&self) -> Vec<Stage> {
        let all = TrainableSet::All;
        let class_only = if self.class_stage_trains_encoder {
            TrainableSet::EncoderAndClassifier
        } else {
            TrainableSet::ClassifierOnly
        };
        match self.strategy {
            Strategy::Pretrain => vec![Stage::new("pretrain", LossMode::Pretrain, all, self.epochs)],
            Strategy::Scratch => vec![Stage::new("scratch", LossMode::Scratch, all, self.epochs)],
            Strategy::FineBoth => vec![Stage::new("both", LossMode::FineBoth, all, self.epochs)],
            Strategy::FineClass => vec![Stage::new("class", LossMode::FineClass, class_only, self.epochs)],
            Strategy::FineBothThenClass => {
                let (a, b) = self.stage_split.unwrap_or((self.epochs / 2, self.epochs - self.epochs / 2));
                vec![
                    Stage::new("both", LossMode::FineBoth, all, a),
                    Stage::new("class", LossMode::FineClass, class_only, b),
                ]
            }
        }
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("strategy".to_string(), self.strategy.name().to_string()),
            ("epochs".to_string(), self.epochs.to_string()),
            ("batch_size".to_string(), self.batch_size.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("learning_rate".to_string(), format!("{:?}", self.optimizer.learning_rate)),
            ("beta1".to_string(), format!("{:?}", self.optimizer.beta1)),
            ("beta2".to_string(), format!("{:?}", self.optimizer.beta2)),
            ("eps".to_string(), format!("{:?}", self.optimizer.eps)),
            ("weight_decay".to_string(), format!("{:?}", self.optimizer.weight_decay)),
            ("class_stage_trains_encoder".to_string(), self.class_stage_trains_encoder.to_string()),
            (
                "class_weighting".to_string(),
                match self.weighting {
                    ClassWeighting::Uniform => "uniform",
                    ClassWeighting::InverseFrequency => "inverse-frequency",
                }
                .to_string(),
            ),
        ];
        if let Some((a, b)) = self.stage_split {
            out.push(("stage_epochs".to_string(), format!("{a},{b}")));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainableSet {
    All,
    ClassifierOnly,
    EncoderAndClassifier,
}

impl TrainableSet {
    pub fn contains(self, group: ParamGroup) -> bool {
        match self {
            TrainableSet::All => true,
            TrainableSet::ClassifierOnly => group == ParamGroup::Classifier,
            TrainableSet::EncoderAndClassifier => group != ParamGroup::Forecast,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub name: &'static str,
    pub mode: LossMode,
    pub trainable: TrainableSet,
    pub epochs: usize,
}

impl Stage {
    fn new(name: &'static str, mode: LossMode, trainable: TrainableSet, epochs: usize) -> Self {
        Stage {
            name,
            mode,
            trainable,
            epochs,
        }
    }
}

/// One training pair: observed frames, future frames and class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Tensor,
    pub target: Tensor,
    pub label: usize,
}

impl Example {
    /// First `t` frames as input and the following `M` as target.
    pub fn from_clip(clip: &LabeledClip, cfg: &ModelConfig) -> Result<Self> {
        let p = &clip.poses;
        if p.dim() != cfg.pose_dim {
            return Err(Error::invalid(format!(
                "clip of subject {} has pose dimension {}, model expects {}",
                clip.subject_id,
                p.dim(),
                cfg.pose_dim
            )));
        }
        let need = cfg.clip_frames();
        if p.frames() < need {
            return Err(Error::invalid(format!(
                "clip of subject {} has {} frames, model needs {need}",
                clip.subject_id,
                p.frames()
            )));
        }
        let n = p.dim();
        let t = cfg.input_frames;
        let data = p.data();
        Ok(Example {
            input: Tensor::matrix(t, n, data[..t * n].to_vec())?,
            target: Tensor::matrix(cfg.forecast_frames, n, data[t * n..need * n].to_vec())?,
            label: clip.label,
        })
    }
}

pub fn examples_from_clips(clips: &[LabeledClip], cfg: &ModelConfig) -> Result<Vec<Example>> {
    let examples = clips
        .iter()
        .map(|c| Example::from_clip(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = examples.iter().find(|e| e.label >= cfg.classes) {
        return Err(Error::invalid(format!(
            "label {} >= model class count {}",
            bad.label, cfg.classes
        )));
    }
    Ok(examples)
}

/// Batch-averaged gradients (one entry per parameter tensor, `None` when frozen)
/// and the batch-averaged losses.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[&Example],
    mode: LossMode,
    trainable: TrainableSet,
    weights: &ClassWeights,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<Option<Tensor>>, LossBreakdown)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut sum: Vec<Option<Tensor>> = params
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| trainable.contains(params.group(i)).then(|| Tensor::zeros(t.shape())))
        .collect();
    let layers = params.config().layers;
    let mut avg = LossBreakdown {
        per_layer: if mode.uses_forecast() { vec![0.0; layers] } else { Vec::new() },
        forecast: mode.uses_forecast().then_some(0.0),
        classification: 0.0,
        total: 0.0,
    };
    let mut tape = Tape::new();
    for ex in batch {
        tape.reset();
        let vars = register_params(&mut tape, params, |g| trainable.contains(g));
        let x = tape.constant(ex.input.clone());
        let mut graph = Graph::new(&mut tape, params, &vars);
        if let Some(rng) = dropout.as_deref_mut() {
            graph = graph.with_dropout(rng);
        }
        let out = graph.forward(x, mode.uses_forecast())?;
        let target = tape.constant(ex.target.clone());
        let loss = combined_loss_var(
            &mut tape,
            mode,
            out.logits,
            ex.label,
            weights,
            Some((&out.per_layer_preds, target)),
        )?;
        let b = loss.breakdown(&tape);
        if !b.total.is_finite() {
            return Err(Error::NonFinite(format!("training loss ({})", b.total)));
        }
        avg.classification += b.classification * scale;
        avg.total += b.total * scale;
        if let (Some(f), Some(bf)) = (avg.forecast.as_mut(), b.forecast) {
            *f += bf * scale;
        }
        for (a, v) in avg.per_layer.iter_mut().zip(&b.per_layer) {
            *a += v * scale;
        }
        let mut grads = tape.backward(loss.total)?;
        for (slot, &var) in sum.iter_mut().zip(&vars) {
            if let Some(acc) = slot {
                let g = grads.take(var).expect("trainable leaf has a gradient");
                for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += v * scale;
                }
            }
        }
    }
    Ok((sum, avg))
}

fn class_weights(examples: &[Example], classes: usize, weighting: ClassWeighting) -> Result<ClassWeights> {
    match weighting {
        ClassWeighting::Uniform => Ok(ClassWeights::uniform(classes)),
        ClassWeighting::InverseFrequency => {
            let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
            inverse_frequency_weights(&labels, classes)
        }
    }
}

/// Runs every stage of `cfg` from `params`, appending to `history`.
fn run(
    mut params: ModelParams,
    examples: &[Example],
    cfg: &TrainConfig,
    mut history: Vec<EpochRecord>,
    mut log: Option<&mut dyn Write>,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let classes = params.config().classes;
    let weights = class_weights(examples, classes, cfg.weighting)?;
    let names: Vec<String> = params.specs().iter().map(|s| s.name.clone()).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut optimizer = AdamW::new(cfg.optimizer.clone(), params.tensors());
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let start = Instant::now();

    for stage in cfg.stages() {
        for _ in 0..stage.epochs {
            order.shuffle(&mut order_rng);
            let mut lc = 0.0;
            let mut lf = 0.0;
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
                let (grads, loss) = batch_gradients(
                    &params,
                    &batch,
                    stage.mode,
                    stage.trainable,
                    &weights,
                    Some(&mut dropout_rng),
                )?;
                let share = batch.len() as f64 / examples.len() as f64;
                lc += loss.classification * share;
                lf += loss.forecast.unwrap_or(0.0) * share;
                total += loss.total * share;
                optimizer.step(params.tensors_mut(), &grads, &names)?;
            }
            let record = EpochRecord {
                epoch: history.len() + 1,
                stage: stage.name.to_string(),
                classification: lc,
                forecast: stage.mode.uses_forecast().then_some(lf),
                total,
            };
            if let Some(w) = log.as_deref_mut() {
                let lf = record.forecast.map_or("-".to_string(), |v| format!("{v:.6}"));
                writeln!(
                    w,
                    "{}\t{}\t{:.6}\t{lf}\t{:.6}\t{:.3}",
                    record.epoch,
                    record.stage,
                    record.classification,
                    record.total,
                    start.elapsed().as_secs_f64()
                )
                .map_err(|e| Error::io("training log", e))?;
            }
            history.push(record);
        }
    }
    Ok((params, history))
}

pub const LOG_HEADER: &str = "epoch\tstage\tl_c\tl_f\ttotal\twall_s";

fn fresh(
    clips: &[LabeledClip],
    model: &ModelConfig,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint> {
    let examples = examples_from_clips(clips, model)?;
    let params = ModelParams::init(model, cfg.seed)?;
    let (params, history) = run(params, &examples, cfg, Vec::new(), log)?;
    Ok(Checkpoint::new(params, cfg.echo(), history))
}

/// Joint activity classification and forecasting from random initialization.
pub fn pretrain(
    clips: &[LabeledClip],
    model: &ModelConfig,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint> {
    if cfg.strategy != Strategy::Pretrain {
        return Err(Error::invalid(format!(
            "pretrain called with strategy {}",
            cfg.strategy.name()
        )));
    }
    fresh(clips, model, cfg, log)
}

/// Both branches under `L_c + L_f` from random initialization.
pub fn train_scratch(
    clips: &[LabeledClip],
    model: &ModelConfig,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint> {
    if cfg.strategy != Strategy::Scratch {
        return Err(Error::invalid(format!(
            "train_scratch called with strategy {}",
            cfg.strategy.name()
        )));
    }
    fresh(clips, model, cfg, log)
}

/// Continues from `init` on a new labeled set. A different class count
/// re-initializes the classification head; the pose dimension must match.
pub fn finetune(
    init: &Checkpoint,
    clips: &[LabeledClip],
    classes: usize,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint> {
    if !cfg.strategy.is_finetune() {
        return Err(Error::invalid(format!(
            "finetune called with strategy {}",
            cfg.strategy.name()
        )));
    }
    let base = init.params.config();
    if let Some(c) = clips.first() {
        if c.poses.dim() != base.pose_dim {
            return Err(Error::invalid(format!(
                "pose dimension {} cannot be transferred to a model with {}",
                c.poses.dim(),
                base.pose_dim
            )));
        }
    }
    let params = if classes == base.classes {
        init.params.clone()
    } else {
        init.params.with_classes(classes, cfg.seed)?
    };
    let examples = examples_from_clips(clips, params.config())?;
    let (params, history) = run(params, &examples, cfg, Vec::new(), log)?;
    Ok(Checkpoint::new(params, cfg.echo(), history))
}
