//! One function per subcommand. Commands communicate only through files in
//! the output directory: manifests, clips, checkpoints, logs and reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use gaitcast::data::{
    majority_label, normalize, ntu_file_tags, parse_skeleton_file, synth_dataset, window, write_clip,
    DatasetManifest, LabeledClip, ManifestEntry, SEVERITY_CLASSES,
};
use gaitcast::evaluation::{
    cv_text, export_forecasts, plan_loocv, run_experiment, run_loocv, ExperimentSpec, Pipeline,
};
use gaitcast::model::{ModelConfig, ModelParams};
use gaitcast::training::{
    check_model_gradients, finetune, pretrain, train_scratch, Checkpoint, Strategy, TrainConfig, LOG_HEADER,
};
use gaitcast::Error;

use crate::config::{RunConfig, Settings};
use crate::{Cli, CliError, Command};

/// Largest relative gradient error `check-grad` accepts.
pub const GRAD_TOLERANCE: f64 = 1e-4;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let mut settings = load_settings(cli)?;
    if cli.command == Command::Pretrain {
        if cli.global.strategy.is_some() {
            return Err(CliError::Config(vec![
                "pretrain always uses the pretrain strategy; drop --strategy".into(),
            ]));
        }
        settings.set("train.strategy", "pretrain");
    }
    let cfg = RunConfig::resolve(settings).map_err(CliError::Config)?;
    let out = cli.global.out.as_path();
    match cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.settings.to_file_text());
            Ok(())
        }
        Command::CheckGrad => check_grad(&cfg),
        command => {
            fs::create_dir_all(out).map_err(|e| Error::Io {
                path: out.display().to_string(),
                source: e,
            })?;
            write_text(&out.join("config.txt"), &cfg.settings.to_file_text())?;
            match command {
                Command::Synth => synth(&cfg, out),
                Command::Ingest => ingest(&cfg, out),
                Command::Pretrain => train(&cfg, out, true),
                Command::Finetune => train(&cfg, out, false),
                Command::Eval => eval(&cfg, out),
                Command::Fewshot => fewshot(&cfg, out),
                Command::Forecast => forecast(&cfg, out),
                Command::CheckGrad | Command::ShowConfig => unreachable!("handled above"),
            }
        }
    }
}

fn load_settings(cli: &Cli) -> Result<Settings> {
    let g = &cli.global;
    let text = match &g.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?),
        None => None,
    };
    let mut overrides = Vec::new();
    let mut problems = Vec::new();
    if let Some(seed) = g.seed {
        overrides.push(("run.seed".to_string(), seed.to_string()));
    }
    if let Some(s) = &g.strategy {
        overrides.push(("train.strategy".to_string(), s.clone()));
    }
    if let Some(f) = &g.fraction {
        overrides.push(("experiment.fractions".to_string(), f.clone()));
    }
    if let Some(r) = g.runs {
        overrides.push(("experiment.runs".to_string(), r.to_string()));
    }
    if let Some(s) = &g.stage_epochs {
        overrides.push(("train.stage_epochs".to_string(), s.clone()));
    }
    for item in &g.set {
        match item.split_once('=') {
            Some((k, v)) => overrides.push((k.trim().to_string(), v.trim().to_string())),
            None => problems.push(format!("--set {item:?} is not KEY=VALUE")),
        }
    }
    match Settings::layered(text.as_deref(), &overrides) {
        Ok(s) if problems.is_empty() => Ok(s),
        Ok(_) => Err(CliError::Config(problems)),
        Err(mut more) => {
            problems.append(&mut more);
            Err(CliError::Config(problems))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

fn require<'a>(value: &'a Option<PathBuf>, key: &str, command: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Config(vec![format!("{key} is required by {command}")]))
}

fn config_problem(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(msg) => CliError::Config(vec![msg]),
        other => CliError::Core(other),
    }
}

fn validated_model(m: ModelConfig) -> Result<ModelConfig> {
    m.validate().map_err(config_problem)?;
    Ok(m)
}

fn validated_train(t: TrainConfig) -> Result<TrainConfig> {
    t.validate().map_err(config_problem)?;
    Ok(t)
}

struct Data {
    manifest: DatasetManifest,
    clips: Vec<LabeledClip>,
}

fn load_data(cfg: &RunConfig, command: &str) -> Result<Data> {
    let path = require(&cfg.manifest, "data.manifest", command)?;
    let manifest = DatasetManifest::load(path)?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let clips = manifest.load_clips(base)?;
    if clips.is_empty() {
        return Err(CliError::Core(Error::InvalidArgument(format!(
            "{} lists no clips",
            path.display()
        ))));
    }
    Ok(Data { manifest, clips })
}

fn save_clips(out: &Path, named: Vec<(String, LabeledClip)>, classes: usize, joints: usize) -> Result<usize> {
    fs::create_dir_all(out.join("clips")).map_err(|e| Error::Io {
        path: out.join("clips").display().to_string(),
        source: e,
    })?;
    let mut entries = Vec::with_capacity(named.len());
    for (name, clip) in &named {
        let rel = PathBuf::from("clips").join(format!("{name}.clip"));
        write_clip(&out.join(&rel), clip, None)?;
        entries.push(ManifestEntry {
            path: rel,
            subject_id: clip.subject_id.clone(),
            label: clip.label,
            split: "all".into(),
        });
    }
    let manifest = DatasetManifest::new(entries, classes, joints)?;
    manifest.save(&out.join("manifest.tsv"))?;
    Ok(manifest.subjects().len())
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = synth_dataset(&cfg.synth)?;
    let named: Vec<(String, LabeledClip)> = ds
        .manifest
        .entries
        .iter()
        .zip(ds.clips)
        .map(|(e, c)| {
            let stem = e.path.file_stem().expect("synthetic clip name").to_string_lossy().into_owned();
            (stem, c)
        })
        .collect();
    let n = named.len();
    let subjects = save_clips(out, named, cfg.synth.classes, cfg.synth.joints)?;
    println!(
        "wrote {n} clips from {subjects} subjects in {} classes to {}",
        cfg.synth.classes,
        out.join("manifest.tsv").display()
    );
    Ok(())
}

/// `stem -> (subject, rater scores)` from a tab-separated label file.
fn read_labels(path: &Path) -> Result<HashMap<String, (String, Vec<u8>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| CliError::Core(Error::Parse { line: i + 1, msg });
        let fields: Vec<&str> = line.split('\t').collect();
        let [stem, subject, scores] = fields[..] else {
            return Err(bad(format!("expected stem, subject and scores, found {} fields", fields.len())));
        };
        let scores = scores
            .split(',')
            .map(|s| s.trim().parse::<u8>())
            .collect::<std::result::Result<Vec<u8>, _>>()
            .map_err(|_| bad(format!("bad score list {scores:?}")))?;
        out.insert(stem.to_string(), (subject.to_string(), scores));
    }
    Ok(out)
}

fn ingest(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = require(&cfg.input_dir, "data.input_dir", "ingest")?;
    let io = |e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()).map_err(io))
        .collect::<std::result::Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "skeleton"));
    files.sort();
    let labels = cfg.labels.as_deref().map(read_labels).transpose()?;
    let mut named = Vec::new();
    for path in &files {
        let stem = path.file_stem().expect("file name").to_string_lossy().into_owned();
        let (subject, label) = match &labels {
            Some(map) => {
                let (subject, scores) = map.get(&stem).ok_or_else(|| {
                    Error::InvalidArgument(format!("{stem} is missing from the label file"))
                })?;
                (subject.clone(), majority_label(scores, cfg.seed)?)
            }
            None => ntu_file_tags(&stem).ok_or_else(|| {
                Error::InvalidArgument(format!("{stem} has no subject and action tags and no label file was given"))
            })?,
        };
        let bytes = fs::read(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let poses = normalize(&parse_skeleton_file(&bytes, cfg.ingest_joints)?)?;
        for (k, clip) in window(&poses, cfg.window, cfg.stride)?.into_iter().enumerate() {
            named.push((
                format!("{stem}_{k:03}"),
                LabeledClip {
                    poses: clip,
                    label,
                    subject_id: subject.clone(),
                    source_id: stem.clone(),
                },
            ));
        }
    }
    if named.is_empty() {
        return Err(CliError::Core(Error::InvalidArgument(format!(
            "no clips of {} frames found in {}",
            cfg.window,
            dir.display()
        ))));
    }
    let classes = cfg.ingest_classes.unwrap_or_else(|| {
        let observed = named.iter().map(|(_, c)| c.label + 1).max().unwrap_or(0);
        if labels.is_some() {
            observed.max(SEVERITY_CLASSES)
        } else {
            observed
        }
    });
    let n = named.len();
    let subjects = save_clips(out, named, classes, cfg.ingest_joints)?;
    println!(
        "wrote {n} clips from {} files and {subjects} subjects to {}",
        files.len(),
        out.join("manifest.tsv").display()
    );
    Ok(())
}

/// Fine-tuning strategy of a run, rejecting `pretrain`.
fn fine_strategy(cfg: &RunConfig) -> Result<Strategy> {
    match cfg.strategy {
        Strategy::Pretrain => Err(CliError::Config(vec![
            "train.strategy pretrain belongs to the pretrain command".into(),
        ])),
        s => Ok(s),
    }
}

fn pipeline(cfg: &RunConfig, data: &Data, command: &str) -> Result<Pipeline> {
    let strategy = fine_strategy(cfg)?;
    let train = validated_train(cfg.train_config(strategy))?;
    if strategy == Strategy::Scratch {
        let model = validated_model(cfg.model_config(data.clips[0].poses.dim(), data.manifest.class_count))?;
        Ok(Pipeline::Scratch { model, train })
    } else {
        let init = Checkpoint::load(require(&cfg.finetune_init, "finetune.init", command)?)?;
        Ok(Pipeline::Finetune {
            init: Box::new(init),
            train,
        })
    }
}

fn train(cfg: &RunConfig, out: &Path, is_pretrain: bool) -> Result<()> {
    let data = load_data(cfg, if is_pretrain { "pretrain" } else { "finetune" })?;
    let log_path = out.join("train.log");
    let file = File::create(&log_path).map_err(|e| Error::Io {
        path: log_path.display().to_string(),
        source: e,
    })?;
    let mut log = BufWriter::new(file);
    writeln!(log, "{LOG_HEADER}").map_err(|e| Error::Io {
        path: log_path.display().to_string(),
        source: e,
    })?;
    let classes = data.manifest.class_count;
    let model = || validated_model(cfg.model_config(data.clips[0].poses.dim(), classes));
    let ck = if is_pretrain {
        let t = validated_train(cfg.train_config(Strategy::Pretrain))?;
        pretrain(&data.clips, &model()?, &t, Some(&mut log))?
    } else {
        match pipeline(cfg, &data, "finetune")? {
            Pipeline::Scratch { model, train } => train_scratch(&data.clips, &model, &train, Some(&mut log))?,
            Pipeline::Finetune { init, train } => finetune(&init, &data.clips, classes, &train, Some(&mut log))?,
        }
    };
    drop(log);
    let path = out.join("checkpoint.ckpt");
    ck.save(&path)?;
    let last = ck.history.last().expect("at least one epoch");
    println!(
        "trained {} epochs, final total loss {:.6}, checkpoint {}",
        ck.history.len(),
        last.total,
        path.display()
    );
    Ok(())
}

fn report_header(cfg: &RunConfig, pipeline: &Pipeline) -> Vec<(String, String)> {
    let mut echo = cfg.settings.pairs();
    echo.extend(pipeline.echo().into_iter().map(|(k, v)| (format!("resolved.{k}"), v)));
    echo
}

fn eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg, "eval")?;
    let mut pipeline = pipeline(cfg, &data, "eval")?;
    let plan = plan_loocv(&data.manifest)?;
    let cv = run_loocv(&data.clips, data.manifest.class_count, &plan, &mut pipeline)?;
    let mut text = String::from("[config]\n");
    for (k, v) in report_header(cfg, &pipeline) {
        let _ = writeln!(text, "{k}={v}");
    }
    let _ = write!(text, "\n[cv folds={}]\n{}", plan.len(), cv_text(&cv));
    let path = out.join("report.txt");
    write_text(&path, &text)?;
    let m = cv.metrics;
    println!(
        "folds={} macro_f1={:.6} macro_precision={:.6} macro_recall={:.6} report={}",
        plan.len(),
        m.f1,
        m.precision,
        m.recall,
        path.display()
    );
    Ok(())
}

fn fewshot(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg, "fewshot")?;
    let mut pipeline = pipeline(cfg, &data, "fewshot")?;
    let plan = plan_loocv(&data.manifest)?;
    let spec = ExperimentSpec {
        fractions: cfg.fractions.clone(),
        runs: cfg.runs,
        sampling_seed: cfg.seed,
    };
    let echo = report_header(cfg, &pipeline);
    let report = run_experiment(&data.clips, data.manifest.class_count, &plan, &spec, echo, &mut pipeline)?;
    write_text(&out.join("report.txt"), &report.to_text())?;
    write_text(&out.join("plot.csv"), &report.plot_csv())?;
    for s in &report.summary {
        println!(
            "fraction={} f1={:.4}±{:.4} precision={:.4}±{:.4} recall={:.4}±{:.4}",
            s.fraction, s.f1.mean, s.f1.std, s.precision.mean, s.precision.std, s.recall.mean, s.recall.std
        );
    }
    Ok(())
}

fn forecast(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(require(&cfg.forecast_checkpoint, "forecast.checkpoint", "forecast")?)?;
    let mut data = load_data(cfg, "forecast")?;
    if cfg.forecast_max_clips > 0 {
        data.clips.truncate(cfg.forecast_max_clips);
    }
    let dir = out.join("forecasts");
    let exported = export_forecasts(&ck.params, &data.clips, &dir)?;
    println!("exported {} forecasts to {}", exported.len(), dir.display());
    Ok(())
}

fn check_grad(cfg: &RunConfig) -> Result<()> {
    let defaults = ModelConfig::default();
    let model = validated_model(cfg.model_config(defaults.pose_dim, defaults.classes))?;
    let report = check_model_gradients(&model, cfg.seed)?;
    let params = ModelParams::init(&model, cfg.seed)?;
    let (tensor, element) = report.worst;
    let name = params.specs().get(tensor).map_or("?", |s| s.name.as_str());
    println!(
        "max_rel_error={:e} checked={} worst={name}[{element}] analytic={:e} numeric={:e}",
        report.max_rel_error, report.checked, report.analytic, report.numeric
    );
    if report.max_rel_error <= GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "max relative gradient error {:e} exceeds {GRAD_TOLERANCE:e}",
            report.max_rel_error
        )))
    }
}
