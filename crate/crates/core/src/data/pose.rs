use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const DIMS_PER_JOINT: usize = 3;
pub const DEFAULT_FRAME_RATE: f64 = 30.0;

/// Time-ordered sequence of flattened 3D skeletons, `frames × (3·joints)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    joints: usize,
    frame_rate: f64,
    data: Vec<f64>,
}

impl PoseSequence {
    pub fn new(joints: usize, frame_rate: f64, data: Vec<f64>) -> Result<Self> {
        if joints == 0 {
            return Err(Error::invalid("pose sequence needs at least one joint"));
        }
        let n = joints * DIMS_PER_JOINT;
        if !data.len().is_multiple_of(n) {
            return Err(Error::invalid(format!(
                "{} values do not form whole frames of {n}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "pose coordinate at frame {}",
                pos / n
            )));
        }
        Ok(PoseSequence {
            joints,
            frame_rate,
            data,
        })
    }

    pub fn from_frames(joints: usize, frames: &[Vec<f64>]) -> Result<Self> {
        let n = joints * DIMS_PER_JOINT;
        if let Some(bad) = frames.iter().position(|f| f.len() != n) {
            return Err(Error::invalid(format!(
                "frame {bad} has {} values, expected {n}",
                frames[bad].len()
            )));
        }
        Self::new(joints, DEFAULT_FRAME_RATE, frames.concat())
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    /// Flattened skeleton dimension N = 3·joints.
    pub fn dim(&self) -> usize {
        self.joints * DIMS_PER_JOINT
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn with_frame_rate(mut self, hz: f64) -> Self {
        self.frame_rate = hz;
        self
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn joint(&self, frame: usize, joint: usize) -> [f64; 3] {
        let f = self.frame(frame);
        let k = joint * DIMS_PER_JOINT;
        [f[k], f[k + 1], f[k + 2]]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frames `start..end` as a new sequence.
    pub fn sub_sequence(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames() {
            return Err(Error::invalid(format!(
                "frame range {start}..{end} outside 0..{}",
                self.frames()
            )));
        }
        let n = self.dim();
        Ok(PoseSequence {
            joints: self.joints,
            frame_rate: self.frame_rate,
            data: self.data[start * n..end * n].to_vec(),
        })
    }

    /// Appends `other` in time; joint counts must agree.
    pub fn concat(&self, other: &PoseSequence) -> Result<Self> {
        if other.joints != self.joints {
            return Err(Error::invalid(format!(
                "cannot join {} joints with {}",
                self.joints, other.joints
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(PoseSequence {
            joints: self.joints,
            frame_rate: self.frame_rate,
            data,
        })
    }

    /// Matrix view `[frames, N]` for the model.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.frames(), self.dim(), self.data.clone())
            .expect("pose data forms whole frames")
    }

    pub fn from_tensor(joints: usize, t: &Tensor) -> Result<Self> {
        let (_, n) = t.dims2("pose_from_tensor")?;
        if n != joints * DIMS_PER_JOINT {
            return Err(Error::invalid(format!(
                "tensor width {n} does not match {joints} joints"
            )));
        }
        Self::new(joints, DEFAULT_FRAME_RATE, t.data().to_vec())
    }
}

/// Splits a clip into observed input `x₁..x_t` and forecasting target `x_{t+1}..x_T`.
pub fn split_input_target(clip: &PoseSequence, t: usize) -> Result<(PoseSequence, PoseSequence)> {
    let total = clip.frames();
    if t < 1 || t >= total {
        return Err(Error::invalid(format!(
            "input length {t} must lie in 1..{total}"
        )));
    }
    Ok((clip.sub_sequence(0, t)?, clip.sub_sequence(t, total)?))
}
