use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Which part of the network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Pose embedding φ, used by both the encoder input and the decoder queries.
    Embedding,
    Encoder,
    /// Decoder stack, decoder positions and pose decoder ψ.
    Forecast,
    Classifier,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    /// Uniform in ±1/sqrt(fan_in).
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionIdx {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForwardIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderLayerIdx {
    pub norm1: NormIdx,
    pub attn: AttentionIdx,
    pub norm2: NormIdx,
    pub ff: FeedForwardIdx,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderLayerIdx {
    pub norm1: NormIdx,
    pub self_attn: AttentionIdx,
    pub norm2: NormIdx,
    pub cross_attn: AttentionIdx,
    pub norm3: NormIdx,
    pub ff: FeedForwardIdx,
}

/// Positions of every named tensor inside [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Layout {
    pub phi_w: usize,
    pub phi_b: usize,
    pub pos_enc: usize,
    pub pos_dec: usize,
    pub encoder: Vec<EncoderLayerIdx>,
    pub enc_norm: NormIdx,
    pub decoder: Vec<DecoderLayerIdx>,
    pub dec_norm: NormIdx,
    pub psi_w: usize,
    pub psi_b: usize,
    pub cls_w: usize,
    pub cls_b: usize,
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
    init: Init,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], group: ParamGroup, init: Init) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            group,
            init,
        });
        self.specs.len() - 1
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize, g: ParamGroup) -> (usize, usize) {
        let w = self.add(format!("{prefix}.weight"), &[fan_in, fan_out], g, Init::Uniform { fan_in });
        let b = self.add(format!("{prefix}.bias"), &[fan_out], g, Init::Zeros);
        (w, b)
    }

    fn norm(&mut self, prefix: &str, d: usize, g: ParamGroup) -> NormIdx {
        NormIdx {
            gain: self.add(format!("{prefix}.gain"), &[d], g, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), &[d], g, Init::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize, g: ParamGroup) -> AttentionIdx {
        let (wq, bq) = self.linear(&format!("{prefix}.query"), d, d, g);
        let (wk, bk) = self.linear(&format!("{prefix}.key"), d, d, g);
        let (wv, bv) = self.linear(&format!("{prefix}.value"), d, d, g);
        let (wo, bo) = self.linear(&format!("{prefix}.out"), d, d, g);
        AttentionIdx {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, ff: usize, g: ParamGroup) -> FeedForwardIdx {
        let (w1, b1) = self.linear(&format!("{prefix}.ff1"), d, ff, g);
        let (w2, b2) = self.linear(&format!("{prefix}.ff2"), ff, d, g);
        FeedForwardIdx { w1, b1, w2, b2 }
    }
}

fn plan(cfg: &ModelConfig) -> (Vec<ParamSpec>, Layout) {
    use ParamGroup::*;
    let d = cfg.d_model;
    let mut b = Builder { specs: Vec::new() };
    let (phi_w, phi_b) = b.linear("phi", cfg.pose_dim, d, Embedding);
    // embedding tables: fan-in taken as the embedding width
    let pos_enc = b.add("encoder.positions".into(), &[cfg.input_frames, d], Encoder, Init::Uniform { fan_in: d });
    let encoder = (0..cfg.layers)
        .map(|l| {
            let p = format!("encoder.{l}");
            EncoderLayerIdx {
                norm1: b.norm(&format!("{p}.norm1"), d, Encoder),
                attn: b.attention(&format!("{p}.self_attn"), d, Encoder),
                norm2: b.norm(&format!("{p}.norm2"), d, Encoder),
                ff: b.feed_forward(&p, d, cfg.ff_dim, Encoder),
            }
        })
        .collect();
    let enc_norm = b.norm("encoder.norm", d, Encoder);
    let pos_dec = b.add("decoder.positions".into(), &[cfg.forecast_frames, d], Forecast, Init::Uniform { fan_in: d });
    let decoder = (0..cfg.layers)
        .map(|l| {
            let p = format!("decoder.{l}");
            DecoderLayerIdx {
                norm1: b.norm(&format!("{p}.norm1"), d, Forecast),
                self_attn: b.attention(&format!("{p}.self_attn"), d, Forecast),
                norm2: b.norm(&format!("{p}.norm2"), d, Forecast),
                cross_attn: b.attention(&format!("{p}.cross_attn"), d, Forecast),
                norm3: b.norm(&format!("{p}.norm3"), d, Forecast),
                ff: b.feed_forward(&p, d, cfg.ff_dim, Forecast),
            }
        })
        .collect();
    let dec_norm = b.norm("decoder.norm", d, Forecast);
    let (psi_w, psi_b) = b.linear("psi", d, cfg.pose_dim, Forecast);
    let (cls_w, cls_b) = b.linear("classifier", d, cfg.classes, Classifier);
    let layout = Layout {
        phi_w,
        phi_b,
        pos_enc,
        pos_dec,
        encoder,
        enc_norm,
        decoder,
        dec_norm,
        psi_w,
        psi_b,
        cls_w,
        cls_b,
    };
    (b.specs, layout)
}

/// Every learnable tensor of the network, in a fixed order.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    layout: Layout,
    tensors: Vec<Tensor>,
}

/// Equal when configurations and every tensor (names, shapes, values) agree.
impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.tensors == other.tensors
            && self.specs.iter().zip(&other.specs).all(|(a, b)| a.name == b.name)
    }
}

impl ModelParams {
    /// Scaled-uniform weights in ±1/sqrt(fan_in), zero biases, unit norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = plan(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = specs.iter().map(|s| init_tensor(s, &mut rng)).collect();
        Ok(ModelParams {
            config: config.clone(),
            specs,
            layout,
            tensors,
        })
    }

    /// Rebuilds parameters from named tensors, validating names and shapes against `config`.
    pub fn from_tensors(config: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = plan(config);
        if named.len() != specs.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, t)) in specs.iter().zip(named) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "expected {} {:?}, found {name} {:?}",
                    spec.name,
                    spec.shape,
                    t.shape()
                )));
            }
            tensors.push(t);
        }
        Ok(ModelParams {
            config: config.clone(),
            specs,
            layout,
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| &self.tensors[i])
    }

    pub fn group(&self, idx: usize) -> ParamGroup {
        self.specs[idx].group
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces the classifier with a freshly initialized head for `classes` outputs.
    pub fn with_classes(&self, classes: usize, seed: u64) -> Result<Self> {
        let config = ModelConfig {
            classes,
            ..self.config.clone()
        };
        let fresh = ModelParams::init(&config, seed)?;
        let mut tensors = self.tensors.clone();
        tensors[self.layout.cls_w] = fresh.tensors[fresh.layout.cls_w].clone();
        tensors[self.layout.cls_b] = fresh.tensors[fresh.layout.cls_b].clone();
        Ok(ModelParams {
            config,
            specs: fresh.specs,
            layout: fresh.layout,
            tensors,
        })
    }
}

fn init_tensor(spec: &ParamSpec, rng: &mut ChaCha8Rng) -> Tensor {
    match spec.init {
        Init::Zeros => Tensor::zeros(&spec.shape),
        Init::Ones => Tensor::filled(&spec.shape, 1.0),
        Init::Uniform { fan_in } => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let len = spec.shape.iter().product();
            let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::new(spec.shape.clone(), data).expect("planned shape")
        }
    }
}
