use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{AttentionIdx, FeedForwardIdx, ModelParams, NormIdx, ParamGroup};
use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Puts every parameter on `tape`; tensors whose group fails `trainable` become constants.
pub fn register_params(
    tape: &mut Tape,
    params: &ModelParams,
    trainable: impl Fn(ParamGroup) -> bool,
) -> Vec<Var> {
    params
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| tape.leaf(t.clone(), trainable(params.group(i))))
        .collect()
}

/// Handles for one forward pass.
#[derive(Clone, Debug)]
pub struct GraphOutput {
    pub latents: Var,
    /// Class logits, shape `[1, C]`.
    pub logits: Var,
    /// One `[M, N]` forecast per decoder layer; empty when forecasting was skipped.
    pub per_layer_preds: Vec<Var>,
}

/// Builds the network's computation on a tape from registered parameter handles.
pub struct Graph<'a> {
    tape: &'a mut Tape,
    params: &'a ModelParams,
    vars: &'a [Var],
    dropout: Option<&'a mut ChaCha8Rng>,
    attention_maps: Option<Vec<Var>>,
}

impl<'a> Graph<'a> {
    pub fn new(tape: &'a mut Tape, params: &'a ModelParams, vars: &'a [Var]) -> Self {
        Graph {
            tape,
            params,
            vars,
            dropout: None,
            attention_maps: None,
        }
    }

    /// Enables dropout at the configured rate, drawing masks from `rng`.
    pub fn with_dropout(mut self, rng: &'a mut ChaCha8Rng) -> Self {
        if self.params.config().dropout > 0.0 {
            self.dropout = Some(rng);
        }
        self
    }

    /// Records every attention probability matrix (one per head and block).
    pub fn with_attention_trace(mut self) -> Self {
        self.attention_maps = Some(Vec::new());
        self
    }

    pub fn attention_maps(&self) -> &[Var] {
        self.attention_maps.as_deref().unwrap_or(&[])
    }

    pub fn tape(&self) -> &Tape {
        self.tape
    }

    fn p(&self, idx: usize) -> Var {
        self.vars[idx]
    }

    fn linear(&mut self, x: Var, w: usize, b: usize) -> Result<Var> {
        let y = self.tape.matmul(x, self.vars[w])?;
        let rows = self.tape.value(y).shape()[0];
        let bias = self.tape.repeat_rows(self.vars[b], rows)?;
        self.tape.add(y, bias)
    }

    fn norm(&mut self, x: Var, n: NormIdx) -> Result<Var> {
        self.tape.layer_norm(x, self.p(n.gain), self.p(n.bias))
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some(rng) = self.dropout.as_deref_mut() else {
            return Ok(x);
        };
        let rate = self.params.config().dropout;
        let keep = 1.0 / (1.0 - rate);
        let shape = self.tape.value(x).shape().to_vec();
        let len = shape.iter().product();
        let mask = (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mask = self.tape.constant(Tensor::new(shape, mask)?);
        self.tape.mul(x, mask)
    }

    fn attention(&mut self, query_in: Var, memory: Var, a: AttentionIdx) -> Result<Var> {
        let cfg = self.params.config();
        let (heads, hd) = (cfg.heads, cfg.head_dim());
        let q = self.linear(query_in, a.wq, a.bq)?;
        let k = self.linear(memory, a.wk, a.bk)?;
        let v = self.linear(memory, a.wv, a.bv)?;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (lo, hi) = (h * hd, (h + 1) * hd);
            let qh = if heads == 1 { q } else { self.tape.slice(q, 1, lo, hi)? };
            let kh = if heads == 1 { k } else { self.tape.slice(k, 1, lo, hi)? };
            let vh = if heads == 1 { v } else { self.tape.slice(v, 1, lo, hi)? };
            let kt = self.tape.transpose(kh)?;
            let scores = self.tape.matmul(qh, kt)?;
            let scores = self.tape.scale(scores, scale);
            let probs = self.tape.softmax_lastdim(scores);
            if let Some(maps) = self.attention_maps.as_mut() {
                maps.push(probs);
            }
            outs.push(self.tape.matmul(probs, vh)?);
        }
        let joined = if heads == 1 { outs[0] } else { self.tape.concat(&outs, 1)? };
        self.linear(joined, a.wo, a.bo)
    }

    fn feed_forward(&mut self, x: Var, f: FeedForwardIdx) -> Result<Var> {
        let h = self.linear(x, f.w1, f.b1)?;
        let h = self.tape.relu(h);
        self.linear(h, f.w2, f.b2)
    }

    fn residual(&mut self, x: Var, sub: Var) -> Result<Var> {
        let sub = self.dropout(sub)?;
        self.tape.add(x, sub)
    }

    /// φ(x_i) + pos_i for every observed frame.
    pub fn embed(&mut self, x: Var) -> Result<Var> {
        let cfg = self.params.config();
        let shape = self.tape.value(x).shape().to_vec();
        let [t, n] = shape[..] else {
            return Err(Error::invalid(format!("pose input must be a matrix, got {shape:?}")));
        };
        if n != cfg.pose_dim {
            return Err(Error::invalid(format!(
                "pose input has {n} columns, model expects {}",
                cfg.pose_dim
            )));
        }
        if t > cfg.input_frames {
            return Err(Error::invalid(format!(
                "{t} input frames exceed the {} encoder positions",
                cfg.input_frames
            )));
        }
        let lay = self.params.layout();
        let e = self.linear(x, lay.phi_w, lay.phi_b)?;
        let pos = self.positions(lay.pos_enc, t)?;
        let e = self.tape.add(e, pos)?;
        self.dropout(e)
    }

    fn positions(&mut self, table: usize, rows: usize) -> Result<Var> {
        let total = self.tape.value(self.p(table)).shape()[0];
        if rows == total {
            Ok(self.p(table))
        } else {
            self.tape.slice(self.p(table), 0, 0, rows)
        }
    }

    /// Pre-norm self-attention encoder stack followed by a final norm.
    pub fn encode(&mut self, embeddings: Var) -> Result<Var> {
        let d = self.params.config().d_model;
        let shape = self.tape.value(embeddings).shape().to_vec();
        if shape.len() != 2 || shape[1] != d {
            return Err(Error::invalid(format!("encoder input {shape:?} is not t x {d}")));
        }
        let lay = self.params.layout();
        let mut h = embeddings;
        for layer in &lay.encoder {
            let n = self.norm(h, layer.norm1)?;
            let a = self.attention(n, n, layer.attn)?;
            h = self.residual(h, a)?;
            let n = self.norm(h, layer.norm2)?;
            let f = self.feed_forward(n, layer.ff)?;
            h = self.residual(h, f)?;
        }
        self.norm(h, lay.enc_norm)
    }

    /// Linear head over the time-averaged latents; returns `[1, C]`.
    pub fn classify(&mut self, latents: Var) -> Result<Var> {
        let lay = self.params.layout();
        let pooled = self.tape.mean_rows(latents)?;
        self.linear(pooled, lay.cls_w, lay.cls_b)
    }

    /// One non-autoregressive decoder pass from `m` copies of the last observed
    /// pose. Each layer's output is mapped to poses by the shared ψ and offset
    /// by the last observed pose.
    pub fn decode_forecast(&mut self, latents: Var, last_pose: Var, m: usize) -> Result<Vec<Var>> {
        let cfg = self.params.config();
        if m == 0 || m > cfg.forecast_frames {
            return Err(Error::invalid(format!(
                "{m} forecast frames outside the {} decoder positions",
                cfg.forecast_frames
            )));
        }
        let lay = self.params.layout();
        let x_t = self.tape.value(last_pose).clone();
        if x_t.len() != cfg.pose_dim {
            return Err(Error::invalid(format!(
                "last pose has {} values, expected {}",
                x_t.len(),
                cfg.pose_dim
            )));
        }
        let last_row = if x_t.rank() == 2 {
            last_pose
        } else {
            let row = Tensor::matrix(1, cfg.pose_dim, x_t.data().to_vec())?;
            self.tape.leaf(row, self.tape.requires_grad(last_pose))
        };
        let query_pose = self.linear(last_row, lay.phi_w, lay.phi_b)?;
        let query = self.tape.repeat_rows(query_pose, m)?;
        let pos = self.positions(lay.pos_dec, m)?;
        let mut h = self.tape.add(query, pos)?;
        let anchor = self.tape.repeat_rows(last_row, m)?;

        let mut preds = Vec::with_capacity(lay.decoder.len());
        for layer in &lay.decoder {
            let n = self.norm(h, layer.norm1)?;
            let a = self.attention(n, n, layer.self_attn)?;
            h = self.residual(h, a)?;
            let n = self.norm(h, layer.norm2)?;
            let c = self.attention(n, latents, layer.cross_attn)?;
            h = self.residual(h, c)?;
            let n = self.norm(h, layer.norm3)?;
            let f = self.feed_forward(n, layer.ff)?;
            h = self.residual(h, f)?;

            let out = self.norm(h, lay.dec_norm)?;
            let pose = self.linear(out, lay.psi_w, lay.psi_b)?;
            preds.push(self.tape.add(pose, anchor)?);
        }
        Ok(preds)
    }

    /// embed → encode → {classify, decode_forecast}.
    pub fn forward(&mut self, x: Var, with_forecast: bool) -> Result<GraphOutput> {
        let emb = self.embed(x)?;
        let latents = self.encode(emb)?;
        let logits = self.classify(latents)?;
        let per_layer_preds = if with_forecast {
            let t = self.tape.value(x).shape()[0];
            let last = self.tape.slice(x, 0, t - 1, t)?;
            let m = self.params.config().forecast_frames;
            self.decode_forecast(latents, last, m)?
        } else {
            Vec::new()
        };
        Ok(GraphOutput {
            latents,
            logits,
            per_layer_preds,
        })
    }
}
