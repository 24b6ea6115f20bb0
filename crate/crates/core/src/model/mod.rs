//! The forecasting/classification Transformer.
//!
//! `φ` embeds each observed pose into `D` dimensions and learned positions are
//! added. A pre-norm encoder produces latents `z`; a single linear layer on the
//! time-averaged latents yields class logits. The decoder receives `M` queries
//! built from the last observed pose, attends to itself and to `z`, and after
//! every layer the shared pose decoder `ψ` plus the last pose give a forecast.
//!
//! Value-level helpers here run on a constant-only tape; training builds the
//! same computation through [`Graph`] with differentiable parameters.

mod config;
mod graph;
mod params;

pub use config::ModelConfig;
pub use graph::{register_params, Graph, GraphOutput};
pub use params::{
    AttentionIdx, DecoderLayerIdx, EncoderLayerIdx, FeedForwardIdx, Layout, ModelParams, NormIdx,
    ParamGroup, ParamSpec,
};

use crate::diff::{Tape, Tensor};
use crate::error::{Error, Result};

/// Result of an evaluation-mode forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastOutput {
    /// Encoder latents, `t × D`.
    pub latents: Tensor,
    pub logits: Vec<f64>,
    /// One `M × N` forecast per decoder layer, first layer first.
    pub per_layer_preds: Vec<Tensor>,
}

impl ForecastOutput {
    /// Forecast of the last decoder layer.
    pub fn final_prediction(&self) -> &Tensor {
        self.per_layer_preds.last().expect("at least one decoder layer")
    }
}

fn frozen(params: &ModelParams) -> (Tape, Vec<crate::diff::Var>) {
    let mut tape = Tape::new();
    let vars = register_params(&mut tape, params, |_| false);
    (tape, vars)
}

/// Evaluation-mode forward pass (no dropout) on a `t × N` pose matrix.
pub fn forward(x: &Tensor, params: &ModelParams) -> Result<ForecastOutput> {
    let (mut tape, vars) = frozen(params);
    let xv = tape.constant(x.clone());
    let out = Graph::new(&mut tape, params, &vars).forward(xv, true)?;
    Ok(ForecastOutput {
        latents: tape.value(out.latents).clone(),
        logits: tape.value(out.logits).data().to_vec(),
        per_layer_preds: out
            .per_layer_preds
            .iter()
            .map(|&v| tape.value(v).clone())
            .collect(),
    })
}

/// Class logits only; the decoder is never evaluated.
pub fn predict_logits(x: &Tensor, params: &ModelParams) -> Result<Vec<f64>> {
    let (mut tape, vars) = frozen(params);
    let xv = tape.constant(x.clone());
    let out = Graph::new(&mut tape, params, &vars).forward(xv, false)?;
    Ok(tape.value(out.logits).data().to_vec())
}

/// φ(x_i) + pos_i, `t × D`.
pub fn embed(x: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let (mut tape, vars) = frozen(params);
    let xv = tape.constant(x.clone());
    let e = Graph::new(&mut tape, params, &vars).embed(xv)?;
    Ok(tape.value(e).clone())
}

pub fn encode(embeddings: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let (mut tape, vars) = frozen(params);
    let ev = tape.constant(embeddings.clone());
    let z = Graph::new(&mut tape, params, &vars).encode(ev)?;
    Ok(tape.value(z).clone())
}

/// Encoder self-attention probabilities, one `t × t` matrix per layer and head.
pub fn encoder_attention(embeddings: &Tensor, params: &ModelParams) -> Result<Vec<Tensor>> {
    let (mut tape, vars) = frozen(params);
    let ev = tape.constant(embeddings.clone());
    let mut graph = Graph::new(&mut tape, params, &vars).with_attention_trace();
    graph.encode(ev)?;
    let maps: Vec<_> = graph.attention_maps().to_vec();
    Ok(maps.into_iter().map(|v| tape.value(v).clone()).collect())
}

pub fn classify(latents: &Tensor, params: &ModelParams) -> Result<Vec<f64>> {
    let (mut tape, vars) = frozen(params);
    let zv = tape.constant(latents.clone());
    let l = Graph::new(&mut tape, params, &vars).classify(zv)?;
    Ok(tape.value(l).data().to_vec())
}

/// Per-layer forecasts of `m` frames from latents and the last observed pose.
pub fn decode_forecast(
    latents: &Tensor,
    params: &ModelParams,
    last_pose: &[f64],
    m: usize,
) -> Result<Vec<Tensor>> {
    let n = params.config().pose_dim;
    if last_pose.len() != n {
        return Err(Error::invalid(format!(
            "last pose has {} values, expected {n}",
            last_pose.len()
        )));
    }
    let (mut tape, vars) = frozen(params);
    let zv = tape.constant(latents.clone());
    let xt = tape.constant(Tensor::matrix(1, n, last_pose.to_vec())?);
    let preds = Graph::new(&mut tape, params, &vars).decode_forecast(zv, xt, m)?;
    Ok(preds.iter().map(|&v| tape.value(v).clone()).collect())
}
