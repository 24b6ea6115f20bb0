use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetManifest, LabeledClip, ManifestEntry};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
}

/// Leave-one-subject-out folds, ordered by subject id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

/// One fold per distinct subject id; clips are grouped strictly by id, so one
/// subject never appears on both sides of a fold.
pub fn plan_loocv(manifest: &DatasetManifest) -> Result<FoldPlan> {
    plan_loocv_subjects(&manifest.subjects())
}

pub fn plan_loocv_subjects(subjects: &[String]) -> Result<FoldPlan> {
    let mut subjects = subjects.to_vec();
    subjects.sort();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let folds = subjects
        .iter()
        .map(|test| Fold {
            test_subject: test.clone(),
            train_subjects: subjects.iter().filter(|s| *s != test).cloned().collect(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// A subject's recording-level label: the most frequent clip label, ties to
/// the lower class index.
pub fn subject_label(labels: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let max = counts.values().copied().max()?;
    counts.into_iter().find(|&(_, c)| c == max).map(|(l, _)| l)
}

/// One video (subject recording) available for few-shot sampling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Video {
    pub subject_id: String,
    pub label: usize,
}

pub fn videos_from_entries(entries: &[ManifestEntry]) -> Vec<Video> {
    group_labels(entries.iter().map(|e| (e.subject_id.as_str(), e.label)))
}

pub fn videos_from_clips(clips: &[LabeledClip]) -> Vec<Video> {
    group_labels(clips.iter().map(|c| (c.subject_id.as_str(), c.label)))
}

fn group_labels<'a>(items: impl Iterator<Item = (&'a str, usize)>) -> Vec<Video> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (s, l) in items {
        by_subject.entry(s).or_default().push(l);
    }
    by_subject
        .into_iter()
        .map(|(s, ls)| Video {
            subject_id: s.to_string(),
            label: subject_label(ls).expect("non-empty group"),
        })
        .collect()
}

pub const FEW_SHOT_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// `round(fraction × n)` with halves rounded up.
pub fn few_shot_target(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

/// Class-balanced subsample of videos.
///
/// Picks `few_shot_target(fraction, n)` videos by water-filling: each pick goes
/// to a class with the fewest picks so far among classes that still have
/// unpicked videos, with ties broken by a seeded class order. Classes with
/// enough supply therefore differ by at most one, and a short class's deficit
/// is spread evenly over the others. Within a class, videos are taken in a
/// seeded shuffle of subject-id order. Fraction 1.0 returns every video.
pub fn few_shot_videos(videos: &[Video], classes: usize, fraction: f64, seed: u64) -> Result<Vec<Video>> {
    if !FEW_SHOT_FRACTIONS.contains(&fraction) {
        return Err(Error::invalid(format!(
            "few-shot fraction {fraction} is not one of 0.25, 0.5, 0.75, 1.0"
        )));
    }
    if videos.is_empty() {
        return Err(Error::invalid("few-shot sampling of an empty set"));
    }
    if let Some(v) = videos.iter().find(|v| v.label >= classes) {
        return Err(Error::invalid(format!(
            "video {} has label {} >= {classes}",
            v.subject_id, v.label
        )));
    }
    let mut sorted = videos.to_vec();
    sorted.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    if fraction == 1.0 {
        return Ok(sorted);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<Video>> = vec![Vec::new(); classes];
    for v in sorted {
        pools[v.label].push(v);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut class_order: Vec<usize> = (0..classes).collect();
    class_order.shuffle(&mut rng);

    let target = few_shot_target(fraction, videos.len());
    let mut taken = vec![0usize; classes];
    for _ in 0..target {
        let next = class_order
            .iter()
            .copied()
            .filter(|&c| taken[c] < pools[c].len())
            .min_by_key(|&c| taken[c])
            .expect("target never exceeds supply");
        taken[next] += 1;
    }
    let mut out: Vec<Video> = pools
        .into_iter()
        .zip(&taken)
        .flat_map(|(pool, &k)| pool.into_iter().take(k))
        .collect();
    out.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(out)
}

/// Manifest restricted to the sampled videos (all clips of each chosen subject).
pub fn few_shot_sample(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<DatasetManifest> {
    let chosen = few_shot_videos(
        &videos_from_entries(&manifest.entries),
        manifest.class_count,
        fraction,
        seed,
    )?;
    let keep: Vec<&str> = chosen.iter().map(|v| v.subject_id.as_str()).collect();
    let entries = manifest
        .entries
        .iter()
        .filter(|e| keep.binary_search(&e.subject_id.as_str()).is_ok())
        .cloned()
        .collect();
    DatasetManifest::new(entries, manifest.class_count, manifest.joints)
}
