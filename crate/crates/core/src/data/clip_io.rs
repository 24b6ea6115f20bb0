//! Portable clip files and dataset manifests.
//!
//! A clip file is a header line `joints=J frames=F label=L subject=S`
//! (optionally followed by `source=..` and `role=..`) and then `F` lines of
//! `3·J` space-separated reals written with 17 significant digits, which
//! round-trips every `f64` exactly.
//!
//! A manifest has one tab-separated record per line: `path subject label split`.
//! Lines starting with `#` are comments; `# classes=C joints=J` pins metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::pose::{PoseSequence, DEFAULT_FRAME_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub poses: PoseSequence,
    pub label: usize,
    pub subject_id: String,
    pub source_id: String,
}

/// A clip file's contents, including the optional role tag used by forecast exports.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipFile {
    pub clip: LabeledClip,
    pub role: Option<String>,
}

fn check_token(name: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(Error::invalid(format!(
            "{name} {value:?} must be non-empty without whitespace or '='"
        )));
    }
    Ok(())
}

pub fn format_clip(clip: &LabeledClip, role: Option<&str>) -> Result<String> {
    check_token("subject", &clip.subject_id)?;
    let p = &clip.poses;
    let mut out = format!(
        "joints={} frames={} label={} subject={}",
        p.joints(),
        p.frames(),
        clip.label,
        clip.subject_id
    );
    if clip.source_id != clip.subject_id {
        check_token("source", &clip.source_id)?;
        write!(out, " source={}", clip.source_id).expect("string write");
    }
    if let Some(role) = role {
        check_token("role", role)?;
        write!(out, " role={role}").expect("string write");
    }
    out.push('\n');
    for f in 0..p.frames() {
        let line: Vec<String> = p.frame(f).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_clip(text: &str) -> Result<ClipFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty clip file"))?;
    let mut joints = None;
    let mut frames = None;
    let mut label = None;
    let mut subject = None;
    let mut source = None;
    let mut role = None;
    for token in header.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("header token {token:?} is not key=value")))?;
        let num = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::parse(1, format!("{key} must be an integer, got {value:?}")))
        };
        match key {
            "joints" => joints = Some(num()?),
            "frames" => frames = Some(num()?),
            "label" => label = Some(num()?),
            "subject" => subject = Some(value.to_string()),
            "source" => source = Some(value.to_string()),
            "role" => role = Some(value.to_string()),
            other => return Err(Error::parse(1, format!("unknown header key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::parse(1, format!("header lacks {k}"));
    let joints = joints.ok_or_else(|| missing("joints"))?;
    let frames = frames.ok_or_else(|| missing("frames"))?;
    let label = label.ok_or_else(|| missing("label"))?;
    let subject_id = subject.ok_or_else(|| missing("subject"))?;
    let n = joints * 3;

    let mut data = Vec::with_capacity(frames * n);
    let mut read = 0;
    for (i, line) in lines {
        if read == frames {
            return Err(Error::parse(i + 1, "more frames than declared"));
        }
        let before = data.len();
        for field in line.split_whitespace() {
            let v = field
                .parse::<f64>()
                .map_err(|_| Error::parse(i + 1, format!("bad number {field:?}")))?;
            data.push(v);
        }
        if data.len() - before != n {
            return Err(Error::parse(
                i + 1,
                format!("expected {n} values, found {}", data.len() - before),
            ));
        }
        read += 1;
    }
    if read != frames {
        return Err(Error::parse(
            text.lines().count() + 1,
            format!("declared {frames} frames, found {read}"),
        ));
    }
    let poses = PoseSequence::new(joints, DEFAULT_FRAME_RATE, data)?;
    Ok(ClipFile {
        clip: LabeledClip {
            poses,
            label,
            source_id: source.unwrap_or_else(|| subject_id.clone()),
            subject_id,
        },
        role,
    })
}

pub fn write_clip(path: &Path, clip: &LabeledClip, role: Option<&str>) -> Result<()> {
    let text = format_clip(clip, role)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_clip(path: &Path) -> Result<ClipFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_clip(&text)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub label: usize,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_count: usize,
    pub joints: usize,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, class_count: usize, joints: usize) -> Result<Self> {
        let m = DatasetManifest {
            entries,
            class_count,
            joints,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.subject_id.is_empty() {
                return Err(Error::invalid(format!("manifest entry {i} has no subject")));
            }
            if e.label >= self.class_count {
                return Err(Error::invalid(format!(
                    "manifest entry {i} label {} >= class count {}",
                    e.label, self.class_count
                )));
            }
        }
        Ok(())
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.entries.iter().map(|e| e.subject_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("# classes={} joints={}\n", self.class_count, self.joints);
        for e in &self.entries {
            check_token("subject", &e.subject_id)?;
            check_token("split", &e.split)?;
            let path = e.path.to_str().ok_or_else(|| {
                Error::invalid(format!("path {} is not UTF-8", e.path.display()))
            })?;
            if path.contains('\t') || path.contains('\n') {
                return Err(Error::invalid(format!("path {path:?} contains a tab or newline")));
            }
            writeln!(out, "{path}\t{}\t{}\t{}", e.subject_id, e.label, e.split)
                .expect("string write");
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut classes = None;
        let mut joints = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                for token in comment.split_whitespace() {
                    match token.split_once('=') {
                        Some(("classes", v)) => {
                            classes = Some(v.parse::<usize>().map_err(|_| {
                                Error::parse(line_no, format!("bad class count {v:?}"))
                            })?)
                        }
                        Some(("joints", v)) => {
                            joints = Some(v.parse::<usize>().map_err(|_| {
                                Error::parse(line_no, format!("bad joint count {v:?}"))
                            })?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, subject, label, split] = fields[..] else {
                return Err(Error::parse(
                    line_no,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            };
            let label = label
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(line_no, format!("bad label {label:?}")))?;
            if subject.trim().is_empty() {
                return Err(Error::parse(line_no, "empty subject id"));
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                subject_id: subject.trim().to_string(),
                label,
                split: split.trim().to_string(),
            });
        }
        let class_count = match classes {
            Some(c) => c,
            None => entries.iter().map(|e| e.label + 1).max().unwrap_or(0),
        };
        DatasetManifest::new(entries, class_count, joints.unwrap_or(0))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    /// Reads every clip, resolving relative paths against `base`. The manifest's
    /// subject and label take precedence over the clip header.
    pub fn load_clips(&self, base: &Path) -> Result<Vec<LabeledClip>> {
        self.entries
            .iter()
            .map(|e| {
                let path = if e.path.is_absolute() {
                    e.path.clone()
                } else {
                    base.join(&e.path)
                };
                let mut clip = read_clip(&path)?.clip;
                if self.joints != 0 && clip.poses.joints() != self.joints {
                    return Err(Error::invalid(format!(
                        "{} has {} joints, manifest says {}",
                        path.display(),
                        clip.poses.joints(),
                        self.joints
                    )));
                }
                clip.label = e.label;
                clip.subject_id = e.subject_id.clone();
                Ok(clip)
            })
            .collect()
    }
}
