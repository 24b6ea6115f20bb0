//! Shared fixtures for integration tests.
#![allow(dead_code)]

use gaitcast::data::{synth_dataset, LabeledClip, SynthDataset, SynthSpec};
use gaitcast::model::ModelConfig;

/// Tiny model over 4-joint skeletons: 8 observed frames, 4 forecast frames.
pub fn small_config(classes: usize) -> ModelConfig {
    ModelConfig {
        pose_dim: 12,
        d_model: 16,
        layers: 2,
        heads: 2,
        ff_dim: 32,
        classes,
        input_frames: 8,
        forecast_frames: 4,
        dropout: 0.1,
    }
}

pub fn synth(classes: usize, clips_per_class: usize, seed: u64, prefix: &str) -> SynthDataset {
    synth_dataset(&SynthSpec {
        classes,
        clips_per_class,
        joints: 4,
        frames: 12,
        seed,
        clips_per_subject: 1,
        subject_prefix: prefix.into(),
    })
    .unwrap()
}

pub fn clips(classes: usize, clips_per_class: usize, seed: u64) -> Vec<LabeledClip> {
    synth(classes, clips_per_class, seed, "s").clips
}
