//! Skeleton motion data: ingestion, preprocessing, labels and synthetic sets.

mod clip_io;
mod ntu;
mod pose;
mod preprocess;
mod synth;

pub use clip_io::{
    format_clip, parse_clip, read_clip, write_clip, ClipFile, DatasetManifest, LabeledClip,
    ManifestEntry,
};
pub use ntu::{ntu_file_tags, parse_skeleton_file, NTU_JOINTS};
pub use pose::{split_input_target, PoseSequence, DEFAULT_FRAME_RATE, DIMS_PER_JOINT};
pub use preprocess::{
    majority_label, normalize, normalize_with, window, HEAD_JOINT, ROOT_JOINT, SEVERITY_CLASSES,
};
pub use synth::{synth_dataset, SynthDataset, SynthSpec};
