//! Declarative run configuration: `key = value` lines grouped under `[section]`
//! headers, layered as defaults, then file, then command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use gaitcast::data::SynthSpec;
use gaitcast::model::ModelConfig;
use gaitcast::training::{AdamWConfig, ClassWeighting, Strategy, TrainConfig};

/// One configuration key with its default and meaning.
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(key: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { key, default, doc }
}

/// Every accepted key, in echo order. An empty default means "unset".
pub const KEYS: &[KeySpec] = &[
    key("run.seed", "0", "seed for synthesis, initialization, shuffling, dropout and few-shot sampling"),
    key("data.manifest", "", "clip manifest; clip paths resolve against its directory"),
    key("data.input_dir", "", "ingest: directory of NTU-style .skeleton files"),
    key("data.labels", "", "ingest: optional TSV of file stem, subject and comma-separated rater scores"),
    key("data.joints", "25", "ingest: joints per skeleton"),
    key("data.window", "100", "ingest: clip length in frames"),
    key("data.stride", "100", "ingest: frames between clip starts"),
    key("data.classes", "auto", "ingest: class count (auto = largest label + 1)"),
    key("synth.classes", "4", "synthetic class count"),
    key("synth.clips_per_class", "8", "synthetic clips per class"),
    key("synth.clips_per_subject", "1", "consecutive clips cut from one synthetic recording"),
    key("synth.joints", "25", "synthetic joints per skeleton"),
    key("synth.frames", "100", "synthetic clip length in frames"),
    key("synth.subject_prefix", "s", "prefix of synthetic subject ids"),
    key("model.pose_dim", "auto", "flattened pose width N (auto = from the data)"),
    key("model.d_model", "128", "embedding width D"),
    key("model.layers", "4", "encoder and decoder layer count L"),
    key("model.heads", "4", "attention heads"),
    key("model.ff_dim", "256", "feed-forward width"),
    key("model.classes", "auto", "class count C (auto = from the manifest)"),
    key("model.input_frames", "60", "observed frames t"),
    key("model.forecast_frames", "40", "forecast frames M"),
    key("model.dropout", "0.1", "dropout probability during training"),
    key("train.strategy", "both-then-class", "scratch, class, both or both-then-class (pretrain for the pretrain command)"),
    key("train.epochs", "auto", "total epochs (auto = 200 for scratch, 100 otherwise, or the stage sum)"),
    key("train.batch_size", "16", "samples per optimizer step"),
    key("train.learning_rate", "0.0001", "constant AdamW step size"),
    key("train.beta1", "0.9", "AdamW first-moment decay"),
    key("train.beta2", "0.999", "AdamW second-moment decay"),
    key("train.eps", "1e-8", "AdamW denominator guard"),
    key("train.weight_decay", "0.01", "AdamW decoupled weight decay"),
    key("train.stage_epochs", "auto", "both-then-class stage epochs as A,B (auto = half and half)"),
    key("train.class_stage_trains_encoder", "false", "let the class-branch stage also update the encoder"),
    key("train.class_weighting", "auto", "uniform or inverse-frequency (auto = uniform for pretrain)"),
    key("finetune.init", "", "pre-trained checkpoint for the class, both and both-then-class strategies"),
    key("experiment.fractions", "0.25,0.5,0.75,1", "few-shot training fractions"),
    key("experiment.runs", "3", "few-shot runs per fraction"),
    key("forecast.checkpoint", "", "checkpoint whose forecasts are exported"),
    key("forecast.max_clips", "8", "clips exported by the forecast command (0 = all)"),
];

/// Raw key/value settings after layering and unknown-key rejection.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    /// Defaults, then `file` (if any), then `overrides` in order.
    pub fn layered(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self, Vec<String>> {
        let mut values: BTreeMap<&'static str, String> =
            KEYS.iter().map(|k| (k.key, k.default.to_string())).collect();
        let mut problems = Vec::new();
        let mut assign = |key: &str, value: &str, origin: &str, problems: &mut Vec<String>| {
            match KEYS.iter().find(|k| k.key == key) {
                Some(spec) => {
                    values.insert(spec.key, value.to_string());
                }
                None => problems.push(format!("unknown key {key:?} ({origin})")),
            }
        };
        if let Some(text) = file {
            for (key, value, line) in parse_sections(text, &mut problems) {
                assign(&key, &value, &format!("line {line}"), &mut problems);
            }
        }
        for (key, value) in overrides {
            assign(key, value, "command line", &mut problems);
        }
        if problems.is_empty() {
            Ok(Settings { values })
        } else {
            Err(problems)
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("{key} is not a configuration key"))
    }

    pub fn set(&mut self, key: &'static str, value: impl Into<String>) {
        assert!(self.values.contains_key(key), "{key} is not a configuration key");
        self.values.insert(key, value.into());
    }

    /// Flat `section.key=value` pairs in declaration order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.key.to_string(), self.values[k.key].clone()))
            .collect()
    }

    /// The settings in the configuration file syntax, loadable with `--config`.
    pub fn to_file_text(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        let mut section = "";
        for k in KEYS {
            let (sec, name) = k.key.split_once('.').expect("dotted key");
            if sec != section {
                let _ = writeln!(out, "{}[{sec}]", if section.is_empty() { "" } else { "\n" });
                section = sec;
            }
            let value = &self.values[k.key];
            let sep = if value.is_empty() { "" } else { " " };
            let _ = writeln!(out, "# {}\n{name} ={sep}{value}", k.doc);
        }
        out
    }
}

/// `(dotted key, value, line number)` triples; syntax problems go to `problems`.
fn parse_sections(text: &str, problems: &mut Vec<String>) -> Vec<(String, String, usize)> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']').map(str::trim) {
                Some(name) if !name.is_empty() => {
                    if !KEYS.iter().any(|k| k.key.split_once('.').map(|p| p.0) == Some(name)) {
                        problems.push(format!("unknown section [{name}] (line {line_no})"));
                    }
                    section = Some(name.to_string());
                }
                _ => problems.push(format!("malformed section header {line:?} (line {line_no})")),
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            problems.push(format!("expected key = value, found {line:?} (line {line_no})"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        let full = match &section {
            Some(s) => format!("{s}.{k}"),
            None if k.contains('.') => k.to_string(),
            None => {
                problems.push(format!("key {k:?} outside any section (line {line_no})"));
                continue;
            }
        };
        if let Some((_, _, first)) = out.iter().find(|(existing, _, _)| *existing == full) {
            problems.push(format!("duplicate key {full:?} (lines {first} and {line_no})"));
            continue;
        }
        out.push((full, v.to_string(), line_no));
    }
    out
}

/// Typed view of [`Settings`].
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub settings: Settings,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub input_dir: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub ingest_joints: usize,
    pub window: usize,
    pub stride: usize,
    pub ingest_classes: Option<usize>,
    pub synth: SynthSpec,
    /// Model settings; `pose_dim` and `classes` hold 0 when left to the data.
    pub model: ModelConfig,
    pub strategy: Strategy,
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub stage_epochs: Option<(usize, usize)>,
    pub class_stage_trains_encoder: bool,
    pub weighting: Option<ClassWeighting>,
    pub finetune_init: Option<PathBuf>,
    pub fractions: Vec<f64>,
    pub runs: usize,
    pub forecast_checkpoint: Option<PathBuf>,
    pub forecast_max_clips: usize,
}

/// Collects every conversion failure so they can be reported together.
struct Reader<'a> {
    settings: &'a Settings,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn parsed<T: std::str::FromStr + Default>(&mut self, key: &str, what: &str) -> T {
        let v = self.settings.get(key);
        v.parse().unwrap_or_else(|_| {
            self.problems.push(format!("{key} = {v:?} is not {what}"));
            T::default()
        })
    }

    fn count(&mut self, key: &str) -> usize {
        self.parsed(key, "a non-negative integer")
    }

    fn real(&mut self, key: &str) -> f64 {
        self.parsed(key, "a number")
    }

    fn auto_count(&mut self, key: &str) -> Option<usize> {
        match self.settings.get(key) {
            "auto" => None,
            _ => Some(self.count(key)),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        Some(self.settings.get(key)).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    fn flag(&mut self, key: &str) -> bool {
        self.parsed(key, "true or false")
    }
}

impl RunConfig {
    pub fn resolve(settings: Settings) -> Result<Self, Vec<String>> {
        let mut r = Reader {
            settings: &settings,
            problems: Vec::new(),
        };
        let seed: u64 = r.parsed("run.seed", "an unsigned 64-bit integer");
        let synth = SynthSpec {
            classes: r.count("synth.classes"),
            clips_per_class: r.count("synth.clips_per_class"),
            joints: r.count("synth.joints"),
            frames: r.count("synth.frames"),
            seed,
            clips_per_subject: r.count("synth.clips_per_subject"),
            subject_prefix: settings.get("synth.subject_prefix").to_string(),
        };
        let model = ModelConfig {
            pose_dim: r.auto_count("model.pose_dim").unwrap_or(0),
            d_model: r.count("model.d_model"),
            layers: r.count("model.layers"),
            heads: r.count("model.heads"),
            ff_dim: r.count("model.ff_dim"),
            classes: r.auto_count("model.classes").unwrap_or(0),
            input_frames: r.count("model.input_frames"),
            forecast_frames: r.count("model.forecast_frames"),
            dropout: r.real("model.dropout"),
        };
        let strategy = Strategy::parse(settings.get("train.strategy")).unwrap_or_else(|e| {
            r.problems.push(format!("train.strategy: {e}"));
            Strategy::FineBothThenClass
        });
        let stage_epochs = match settings.get("train.stage_epochs") {
            "auto" => None,
            v => match v.split_once(',').map(|(a, b)| (a.trim().parse(), b.trim().parse())) {
                Some((Ok(a), Ok(b))) => Some((a, b)),
                _ => {
                    r.problems
                        .push(format!("train.stage_epochs = {v:?} is not two integers A,B"));
                    None
                }
            },
        };
        let weighting = match settings.get("train.class_weighting") {
            "auto" => None,
            "uniform" => Some(ClassWeighting::Uniform),
            "inverse-frequency" => Some(ClassWeighting::InverseFrequency),
            v => {
                r.problems.push(format!(
                    "train.class_weighting = {v:?} is not auto, uniform or inverse-frequency"
                ));
                None
            }
        };
        let fractions_text = settings.get("experiment.fractions");
        let fractions: Vec<f64> = fractions_text
            .split(',')
            .filter_map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v > 0.0 && v <= 1.0 => Some(v),
                _ => {
                    r.problems.push(format!(
                        "experiment.fractions entry {:?} is not a number in (0, 1]",
                        f.trim()
                    ));
                    None
                }
            })
            .collect();
        let cfg = RunConfig {
            seed,
            manifest: r.path("data.manifest"),
            input_dir: r.path("data.input_dir"),
            labels: r.path("data.labels"),
            ingest_joints: r.count("data.joints"),
            window: r.count("data.window"),
            stride: r.count("data.stride"),
            ingest_classes: r.auto_count("data.classes"),
            synth,
            model,
            strategy,
            epochs: r.auto_count("train.epochs"),
            batch_size: r.count("train.batch_size"),
            optimizer: AdamWConfig {
                learning_rate: r.real("train.learning_rate"),
                beta1: r.real("train.beta1"),
                beta2: r.real("train.beta2"),
                eps: r.real("train.eps"),
                weight_decay: r.real("train.weight_decay"),
            },
            stage_epochs,
            class_stage_trains_encoder: r.flag("train.class_stage_trains_encoder"),
            weighting,
            finetune_init: r.path("finetune.init"),
            fractions,
            runs: r.count("experiment.runs"),
            forecast_checkpoint: r.path("forecast.checkpoint"),
            forecast_max_clips: r.count("forecast.max_clips"),
            settings: settings.clone(),
        };
        if r.problems.is_empty() {
            Ok(cfg)
        } else {
            Err(r.problems)
        }
    }

    /// Model settings with data-derived values filled in where left on auto.
    pub fn model_config(&self, pose_dim: usize, classes: usize) -> ModelConfig {
        let mut m = self.model.clone();
        if m.pose_dim == 0 {
            m.pose_dim = pose_dim;
        }
        if m.classes == 0 {
            m.classes = classes;
        }
        m
    }

    /// Training settings for `strategy`, with every `auto` resolved.
    pub fn train_config(&self, strategy: Strategy) -> TrainConfig {
        let mut t = TrainConfig::new(strategy);
        t.seed = self.seed;
        t.batch_size = self.batch_size;
        t.optimizer = self.optimizer.clone();
        t.class_stage_trains_encoder = self.class_stage_trains_encoder;
        if let Some(w) = self.weighting {
            t.weighting = w;
        }
        match (self.epochs, self.stage_epochs) {
            (Some(e), split) => {
                t.epochs = e;
                if strategy == Strategy::FineBothThenClass {
                    t.stage_split = Some(split.unwrap_or((e / 2, e - e / 2)));
                }
            }
            (None, Some((a, b))) if strategy == Strategy::FineBothThenClass => {
                t.epochs = a + b;
                t.stage_split = Some((a, b));
            }
            (None, _) => {}
        }
        t
    }
}
