//! Optimizer, training strategies and checkpoints.

mod checkpoint;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, EpochRecord, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{AdamW, AdamWConfig};
pub use trainer::{
    batch_gradients, examples_from_clips, finetune, pretrain, train_scratch, ClassWeighting, Example,
    Stage, Strategy, TrainConfig, TrainableSet, LOG_HEADER,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{check_gradients, GradCheckReport, Tensor, DEFAULT_REL_FLOOR, DEFAULT_STEP};
use crate::error::Result;
use crate::model::{Graph, ModelConfig, ModelParams};
use crate::objectives::{combined_loss_var, ClassWeights, LossMode};

/// Finite-difference audit of `L_c + L_f` with respect to every model parameter,
/// on random input, target and label drawn from `seed`. Dropout is not applied.
pub fn check_model_gradients(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    config.validate()?;
    let params = ModelParams::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut random = |rows: usize, cols: usize| {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let x = random(config.input_frames, config.pose_dim)?;
    let target = random(config.forecast_frames, config.pose_dim)?;
    let label = (seed % config.classes as u64) as usize;
    let weights = ClassWeights::uniform(config.classes);
    let names: Vec<String> = params.specs().iter().map(|s| s.name.clone()).collect();
    check_gradients(
        |tape, vars| {
            let p = ModelParams::from_tensors(
                config,
                names
                    .iter()
                    .cloned()
                    .zip(vars.iter().map(|&v| tape.value(v).clone()))
                    .collect(),
            )?;
            let xv = tape.constant(x.clone());
            let tv = tape.constant(target.clone());
            let out = Graph::new(tape, &p, vars).forward(xv, true)?;
            let loss = combined_loss_var(
                tape,
                LossMode::Pretrain,
                out.logits,
                label,
                &weights,
                Some((&out.per_layer_preds, tv)),
            )?;
            Ok(loss.total)
        },
        params.tensors(),
        DEFAULT_STEP,
        DEFAULT_REL_FLOOR,
    )
}
