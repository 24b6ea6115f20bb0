//! Transformer motion forecasting with a severity classification head.
//!
//! The network embeds observed skeleton frames, encodes them with a
//! Transformer encoder, classifies the mean-pooled latents with a single
//! linear layer and, in parallel, decodes a whole block of future poses in
//! one non-autoregressive pass from queries built out of the last observed
//! pose. Forecasting serves as a self-supervised pretext task that is later
//! fine-tuned for severity estimation.
//!
//! Modules:
//! - [`diff`]: reverse-mode differentiation over `f64` tensors
//! - [`data`]: skeleton parsing, normalization, windowing, synthetic gait sets
//! - [`model`]: network parameters and forward pass
//! - [`objectives`]: forecasting and classification losses
//! - [`training`]: optimizer, training strategies, checkpoints
//! - [`evaluation`]: metrics, subject-level cross-validation, few-shot protocol

pub mod data;
pub mod diff;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod objectives;
pub mod training;

pub use error::{Error, Result};
