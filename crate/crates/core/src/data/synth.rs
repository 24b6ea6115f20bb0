//! Procedural gait generator used as a desk-scale stand-in for recorded skeletons.
//!
//! Classes lie along an impairment axis: class 0 walks fast with long strides
//! and full arm swing, the last class walks slowly with short strides, little
//! arm swing, forward lean, tremor and more jitter. Every subject perturbs its
//! class parameters, body size and gait phase, so classes overlap somewhat.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::clip_io::{DatasetManifest, LabeledClip, ManifestEntry};
use super::pose::{PoseSequence, DEFAULT_FRAME_RATE};
use super::preprocess::{normalize, window};
use super::NTU_JOINTS;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub clips_per_class: usize,
    pub joints: usize,
    pub frames: usize,
    pub seed: u64,
    /// Consecutive clips cut from one recording share a subject.
    pub clips_per_subject: usize,
    /// Prefix for subject ids, so independently generated sets stay disjoint.
    pub subject_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 4,
            clips_per_class: 8,
            joints: NTU_JOINTS,
            frames: 100,
            seed: 1,
            clips_per_subject: 1,
            subject_prefix: "s".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub clips: Vec<LabeledClip>,
}

#[derive(Clone, Copy)]
enum Limb {
    Torso,
    Arm(f64),
    Leg(f64),
}

/// Rest pose (x lateral, y up, z forward) in NTU joint order, with each joint's
/// limb, side sign and distance along the limb.
const TEMPLATE: [([f64; 3], Limb, f64); NTU_JOINTS] = [
    ([0.0, 1.0, 0.0], Limb::Torso, 0.0),
    ([0.0, 1.25, 0.0], Limb::Torso, 0.0),
    ([0.0, 1.5, 0.0], Limb::Torso, 0.0),
    ([0.0, 1.65, 0.02], Limb::Torso, 0.0),
    ([-0.18, 1.45, 0.0], Limb::Arm(-1.0), 0.0),
    ([-0.2, 1.18, 0.0], Limb::Arm(-1.0), 0.5),
    ([-0.21, 0.95, 0.0], Limb::Arm(-1.0), 1.0),
    ([-0.21, 0.88, 0.0], Limb::Arm(-1.0), 1.1),
    ([0.18, 1.45, 0.0], Limb::Arm(1.0), 0.0),
    ([0.2, 1.18, 0.0], Limb::Arm(1.0), 0.5),
    ([0.21, 0.95, 0.0], Limb::Arm(1.0), 1.0),
    ([0.21, 0.88, 0.0], Limb::Arm(1.0), 1.1),
    ([-0.1, 0.97, 0.0], Limb::Leg(-1.0), 0.0),
    ([-0.1, 0.52, 0.0], Limb::Leg(-1.0), 0.5),
    ([-0.1, 0.08, 0.0], Limb::Leg(-1.0), 1.0),
    ([-0.1, 0.03, 0.1], Limb::Leg(-1.0), 1.1),
    ([0.1, 0.97, 0.0], Limb::Leg(1.0), 0.0),
    ([0.1, 0.52, 0.0], Limb::Leg(1.0), 0.5),
    ([0.1, 0.08, 0.0], Limb::Leg(1.0), 1.0),
    ([0.1, 0.03, 0.1], Limb::Leg(1.0), 1.1),
    ([0.0, 1.42, 0.0], Limb::Torso, 0.0),
    ([-0.21, 0.82, 0.0], Limb::Arm(-1.0), 1.2),
    ([-0.19, 0.86, 0.03], Limb::Arm(-1.0), 1.1),
    ([0.21, 0.82, 0.0], Limb::Arm(1.0), 1.2),
    ([0.19, 0.86, 0.03], Limb::Arm(1.0), 1.1),
];

/// Per-subject gait parameters.
#[derive(Clone, Debug)]
struct Gait {
    speed: f64,
    cycle_hz: f64,
    stride: f64,
    arm_swing: f64,
    noise: f64,
    tremor: f64,
    lean: f64,
    height: f64,
    phase: f64,
    tremor_phase: f64,
    origin: [f64; 2],
}

impl Gait {
    fn sample(severity: f64, rng: &mut impl Rng) -> Self {
        let mut jitter = |v: f64| v * rng.random_range(0.8..1.2);
        let speed = jitter(1.3 - 0.8 * severity);
        let cycle_hz = jitter(0.95 - 0.3 * severity);
        let stride = jitter(0.35 - 0.2 * severity);
        let arm_swing = jitter(0.3 - 0.22 * severity);
        let noise = jitter(0.006 + 0.012 * severity);
        let tremor = jitter(0.002 + 0.02 * severity);
        let lean = jitter(0.02 + 0.15 * severity);
        Gait {
            speed,
            cycle_hz,
            stride,
            arm_swing,
            noise,
            tremor,
            lean,
            height: rng.random_range(0.9..1.1),
            phase: rng.random_range(0.0..2.0 * PI),
            tremor_phase: rng.random_range(0.0..2.0 * PI),
            origin: [rng.random_range(-1.0..1.0), rng.random_range(-3.0..0.0)],
        }
    }

    fn pose(&self, joints: usize, time: f64, noise: &mut impl FnMut() -> f64) -> Vec<f64> {
        let theta = 2.0 * PI * self.cycle_hz * time + self.phase;
        let bob = 0.02 * (2.0 * theta).cos();
        let tremor = self.tremor * (2.0 * PI * 5.0 * time + self.tremor_phase).sin();
        let mut out = Vec::with_capacity(joints * 3);
        for &([x, y, z], limb, reach) in TEMPLATE.iter().take(joints) {
            let (mut dx, mut dy, mut dz) = (0.0, bob, 0.0);
            match limb {
                Limb::Torso => {}
                Limb::Leg(side) => {
                    let swing = (theta + if side > 0.0 { PI } else { 0.0 }).sin();
                    dz += self.stride * reach * swing;
                    let lift = (theta + if side > 0.0 { PI } else { 0.0 } + PI / 2.0).sin();
                    dy += 0.25 * self.stride * reach.min(1.0) * lift.max(0.0);
                }
                Limb::Arm(side) => {
                    let swing = (theta + if side > 0.0 { 0.0 } else { PI }).sin();
                    dz += self.arm_swing * reach * swing;
                    dx += tremor * reach;
                    dy += 0.5 * tremor * reach;
                }
            }
            // forward lean grows with height above the pelvis
            dz += self.lean * (y - 1.0).max(0.0);
            let px = self.origin[0] + self.height * (x + dx);
            let py = self.height * (y + dy);
            let pz = self.origin[1] + self.speed * time + self.height * (z + dz);
            out.extend([px + noise(), py + noise(), pz + noise()]);
        }
        out
    }
}

/// Generates a labeled, normalized, windowed dataset deterministically from `spec.seed`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthDataset> {
    if spec.classes < 2 {
        return Err(Error::invalid("synthetic data needs at least 2 classes"));
    }
    if !(4..=NTU_JOINTS).contains(&spec.joints) {
        return Err(Error::invalid(format!(
            "synthetic skeletons support 4..={NTU_JOINTS} joints, got {}",
            spec.joints
        )));
    }
    if spec.frames < 2 || spec.clips_per_class == 0 || spec.clips_per_subject == 0 {
        return Err(Error::invalid("frames must be >= 2 and clip counts positive"));
    }
    if !spec.clips_per_class.is_multiple_of(spec.clips_per_subject) {
        return Err(Error::invalid(format!(
            "clips_per_class {} is not a multiple of clips_per_subject {}",
            spec.clips_per_class, spec.clips_per_subject
        )));
    }
    let subjects_per_class = spec.clips_per_class / spec.clips_per_subject;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clips = Vec::with_capacity(spec.classes * spec.clips_per_class);
    let mut entries = Vec::with_capacity(clips.capacity());
    let mut subject_no = 0;

    // Subjects are interleaved across classes so ids carry no label order.
    for _ in 0..subjects_per_class {
        for label in 0..spec.classes {
            let severity = label as f64 / (spec.classes - 1) as f64;
            let gait = Gait::sample(severity, &mut rng);
            let normal = Normal::new(0.0, gait.noise).expect("positive noise");
            let frames = spec.frames * spec.clips_per_subject;
            let mut data = Vec::with_capacity(frames * spec.joints * 3);
            for f in 0..frames {
                let time = f as f64 / DEFAULT_FRAME_RATE;
                data.extend(gait.pose(spec.joints, time, &mut || normal.sample(&mut rng)));
            }
            let recording = normalize(&PoseSequence::new(spec.joints, DEFAULT_FRAME_RATE, data)?)?;
            let subject_id = format!("{}{subject_no:03}", spec.subject_prefix);
            subject_no += 1;
            for (k, poses) in window(&recording, spec.frames, spec.frames)?
                .into_iter()
                .enumerate()
            {
                entries.push(ManifestEntry {
                    path: PathBuf::from(format!("clips/{subject_id}_{k:02}.clip")),
                    subject_id: subject_id.clone(),
                    label,
                    split: "all".into(),
                });
                clips.push(LabeledClip {
                    poses,
                    label,
                    subject_id: subject_id.clone(),
                    source_id: subject_id.clone(),
                });
            }
        }
    }
    Ok(SynthDataset {
        manifest: DatasetManifest::new(entries, spec.classes, spec.joints)?,
        clips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_balance() {
        let ds = synth_dataset(&SynthSpec {
            classes: 4,
            clips_per_class: 8,
            joints: 25,
            frames: 100,
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_eq!(ds.clips.len(), 32);
        for c in 0..4 {
            assert_eq!(ds.clips.iter().filter(|k| k.label == c).count(), 8);
        }
        assert_eq!(ds.manifest.subjects().len(), 32);
        assert!(ds.clips.iter().all(|c| c.poses.frames() == 100));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec {
            clips_per_class: 2,
            ..SynthSpec::default()
        };
        let a = synth_dataset(&spec).unwrap();
        let b = synth_dataset(&spec).unwrap();
        assert_eq!(a.clips, b.clips);
        let c = synth_dataset(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.clips[0].poses, c.clips[0].poses);
    }

    #[test]
    fn subjects_own_consecutive_clips() {
        let ds = synth_dataset(&SynthSpec {
            classes: 2,
            clips_per_class: 4,
            clips_per_subject: 2,
            frames: 20,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_eq!(ds.clips.len(), 8);
        assert_eq!(ds.manifest.subjects().len(), 4);
        assert_eq!(ds.clips[0].subject_id, ds.clips[1].subject_id);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = |s: SynthSpec| synth_dataset(&s).is_err();
        assert!(bad(SynthSpec {
            classes: 1,
            ..SynthSpec::default()
        }));
        assert!(bad(SynthSpec {
            joints: 30,
            ..SynthSpec::default()
        }));
        assert!(bad(SynthSpec {
            clips_per_class: 3,
            clips_per_subject: 2,
            ..SynthSpec::default()
        }));
    }
}
