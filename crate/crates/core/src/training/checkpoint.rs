//! Binary checkpoint container.
//!
//! Layout:
//! - magic `GCASTCK\n` followed by a `u32` format version;
//! - a `u64` byte length and a UTF-8 text header of `key=value` lines echoing
//!   the model and training configuration;
//! - a `u64` epoch-record count, then per record: stage name, epoch, `L_c`,
//!   an `L_f` presence flag and value, and the total;
//! - a `u64` tensor count, then per tensor: name, `u64` rank, `u64` dims and
//!   the raw values.
//!
//! Strings are a `u64` byte length plus bytes; every number is little-endian.

use std::fs;
use std::path::Path;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GCASTCK\n";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Averaged losses of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based, counted across stages.
    pub epoch: usize,
    pub stage: String,
    pub classification: f64,
    /// `None` in stages that do not evaluate forecasting.
    pub forecast: Option<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Training settings that produced `params`, as `key=value` pairs.
    pub train_echo: Vec<(String, String)>,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, train_echo: Vec<(String, String)>, history: Vec<EpochRecord>) -> Self {
        Checkpoint {
            params,
            train_echo,
            history,
        }
    }

    /// Wraps untrained parameters.
    pub fn untrained(params: ModelParams) -> Self {
        Checkpoint::new(params, Vec::new(), Vec::new())
    }

    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    pub fn epoch(&self) -> usize {
        self.history.len()
    }

    /// The full header text: model keys under `model.`, training keys under `train.`.
    pub fn header(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.params.config().echo() {
            out.push_str(&format!("model.{k}={v}\n"));
        }
        for (k, v) in &self.train_echo {
            out.push_str(&format!("train.{k}={v}\n"));
        }
        out.push_str(&format!("epoch={}\n", self.epoch()));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut buf, &self.header());
        put_u64(&mut buf, self.history.len() as u64);
        for r in &self.history {
            put_str(&mut buf, &r.stage);
            put_u64(&mut buf, r.epoch as u64);
            put_f64(&mut buf, r.classification);
            buf.push(r.forecast.is_some() as u8);
            put_f64(&mut buf, r.forecast.unwrap_or(0.0));
            put_f64(&mut buf, r.total);
        }
        put_u64(&mut buf, self.params.tensors().len() as u64);
        for (spec, t) in self.params.specs().iter().zip(self.params.tensors()) {
            put_str(&mut buf, &spec.name);
            put_u64(&mut buf, t.rank() as u64);
            for &d in t.shape() {
                put_u64(&mut buf, d as u64);
            }
            for &v in t.data() {
                put_f64(&mut buf, v);
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header = r.string()?;
        let (config, train_echo) = parse_header(&header)?;

        let records = r.u64()? as usize;
        let mut history = Vec::with_capacity(records.min(1 << 20));
        for _ in 0..records {
            let stage = r.string()?;
            let epoch = r.u64()? as usize;
            let classification = r.f64()?;
            let has_forecast = r.take(1)?[0] != 0;
            let forecast = r.f64()?;
            let total = r.f64()?;
            history.push(EpochRecord {
                epoch,
                stage,
                classification,
                forecast: has_forecast.then_some(forecast),
                total,
            });
        }

        let count = r.u64()? as usize;
        let mut named = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u64()? as usize;
            if rank > 8 {
                return Err(Error::Checkpoint(format!("tensor {name} has implausible rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
                Error::Checkpoint(format!("tensor {name} shape {shape:?} overflows"))
            })?;
            if len > r.remaining() / 8 {
                return Err(Error::Checkpoint(format!("tensor {name} is truncated")));
            }
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            named.push((name, Tensor::new(shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        let params = ModelParams::from_tensors(&config, named)
            .map_err(|e| Error::Checkpoint(format!("tensors do not match config: {e}")))?;
        Ok(Checkpoint {
            params,
            train_echo,
            history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn parse_header(text: &str) -> Result<(ModelConfig, Vec<(String, String)>)> {
    let mut model = Vec::new();
    let mut train = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("bad header line {line:?}")))?;
        if let Some(k) = k.strip_prefix("model.") {
            model.push((k.to_string(), v.to_string()));
        } else if let Some(k) = k.strip_prefix("train.") {
            train.push((k.to_string(), v.to_string()));
        } else if k != "epoch" {
            return Err(Error::Checkpoint(format!("unknown header key {k:?}")));
        }
    }
    let get = |key: &str| -> Result<&str> {
        model
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("header lacks model.{key}")))
    };
    let int = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("model.{key} is not an integer")))
    };
    let config = ModelConfig {
        pose_dim: int("pose_dim")?,
        d_model: int("d_model")?,
        layers: int("layers")?,
        heads: int("heads")?,
        ff_dim: int("ff_dim")?,
        classes: int("classes")?,
        input_frames: int("input_frames")?,
        forecast_frames: int("forecast_frames")?,
        dropout: get("dropout")?
            .parse()
            .map_err(|_| Error::Checkpoint("model.dropout is not a number".into()))?,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("header config invalid: {e}")))?;
    Ok((config, train))
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u64(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))
    }
}
