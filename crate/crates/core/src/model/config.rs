use crate::error::{Error, Result};

/// Network hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Flattened skeleton dimension N (3 × joints).
    pub pose_dim: usize,
    /// Embedding width D.
    pub d_model: usize,
    /// Layer count L, shared by encoder and decoder.
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Number of classes C.
    pub classes: usize,
    /// Observed frames t.
    pub input_frames: usize,
    /// Forecast frames M.
    pub forecast_frames: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            pose_dim: 75,
            d_model: 128,
            layers: 4,
            heads: 4,
            ff_dim: 256,
            classes: 4,
            input_frames: 60,
            forecast_frames: 40,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        // Skeleton data always has 3·J columns, but the network itself accepts any width.
        if self.pose_dim == 0 {
            problems.push("pose_dim must be at least 1".into());
        }
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            problems.push(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.layers == 0 {
            problems.push("layers must be at least 1".into());
        }
        if self.ff_dim == 0 {
            problems.push("ff_dim must be at least 1".into());
        }
        if self.classes < 2 {
            problems.push(format!("classes {} must be at least 2", self.classes));
        }
        if self.input_frames == 0 {
            problems.push("input_frames must be at least 1".into());
        }
        if self.forecast_frames == 0 {
            problems.push("forecast_frames must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn joints(&self) -> usize {
        self.pose_dim / 3
    }

    /// Total frames consumed per clip (t + M).
    pub fn clip_frames(&self) -> usize {
        self.input_frames + self.forecast_frames
    }

    /// `key=value` lines describing every field, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("pose_dim".into(), self.pose_dim.to_string()),
            ("d_model".into(), self.d_model.to_string()),
            ("layers".into(), self.layers.to_string()),
            ("heads".into(), self.heads.to_string()),
            ("ff_dim".into(), self.ff_dim.to_string()),
            ("classes".into(), self.classes.to_string()),
            ("input_frames".into(), self.input_frames.to_string()),
            ("forecast_frames".into(), self.forecast_frames.to_string()),
            ("dropout".into(), format!("{:?}", self.dropout)),
        ]
    }
}
