use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{write_clip, LabeledClip, PoseSequence};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams};

pub const ROLE_INPUT: &str = "input";
pub const ROLE_TRUTH: &str = "truth";
pub const ROLE_PREDICTION: &str = "prediction";

/// One clip's observed frames, true future and final-layer forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct ExportedForecast {
    pub input: PoseSequence,
    pub truth: PoseSequence,
    pub prediction: PoseSequence,
    /// Files written for the input, truth and prediction, in that order.
    pub paths: [PathBuf; 3],
}

/// Writes `clip_{i:04}_{role}.clip` files for every clip into `out`.
pub fn export_forecasts(params: &ModelParams, clips: &[LabeledClip], out: &Path) -> Result<Vec<ExportedForecast>> {
    let cfg = params.config();
    let (t, m, n) = (cfg.input_frames, cfg.forecast_frames, cfg.pose_dim);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut exported = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let p = &clip.poses;
        if p.dim() != n {
            return Err(Error::invalid(format!(
                "clip {i} has pose dimension {}, checkpoint expects {n}",
                p.dim()
            )));
        }
        if p.frames() < t + m {
            return Err(Error::invalid(format!(
                "clip {i} has {} frames, forecasting needs {}",
                p.frames(),
                t + m
            )));
        }
        let input = p.sub_sequence(0, t)?;
        let truth = p.sub_sequence(t, t + m)?;
        let x = Tensor::matrix(t, n, input.data().to_vec())?;
        let fc = forward(&x, params)?;
        let prediction =
            PoseSequence::from_tensor(p.joints(), fc.final_prediction())?.with_frame_rate(p.frame_rate());
        let stem = format!("clip_{i:04}");
        let mut paths: Vec<PathBuf> = Vec::with_capacity(3);
        for (role, poses) in [(ROLE_INPUT, &input), (ROLE_TRUTH, &truth), (ROLE_PREDICTION, &prediction)] {
            let path = out.join(format!("{stem}_{role}.clip"));
            let labeled = LabeledClip {
                poses: poses.clone(),
                label: clip.label,
                subject_id: clip.subject_id.clone(),
                source_id: clip.source_id.clone(),
            };
            write_clip(&path, &labeled, Some(role))?;
            paths.push(path);
        }
        exported.push(ExportedForecast {
            input,
            truth,
            prediction,
            paths: paths.try_into().expect("three roles"),
        });
    }
    Ok(exported)
}
