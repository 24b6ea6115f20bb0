//! Loss identities and invariants.

use gaitcast::diff::{Tape, Tensor};
use gaitcast::model::{register_params, Graph, ModelConfig, ModelParams};
use gaitcast::objectives::{
    combined_loss, combined_loss_var, cross_entropy, forecast_loss, layerwise_l1, ClassWeights, LossComponents,
    LossMode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mat(rows: usize, cols: usize, v: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, v).unwrap()
}

proptest! {
    #[test]
    fn cross_entropy_is_shift_invariant(
        logits in proptest::collection::vec(-5.0f64..5.0, 2..7),
        shift in -50.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let c = logits.len();
        let label = (seed % c as u64) as usize;
        let w = ClassWeights::uniform(c);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let a = cross_entropy(&logits, label, &w).unwrap();
        let b = cross_entropy(&shifted, label, &w).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn cross_entropy_falls_as_true_logit_rises(
        logits in proptest::collection::vec(-5.0f64..5.0, 2..7),
        bump in 0.01f64..3.0,
    ) {
        let w = ClassWeights::uniform(logits.len());
        let mut up = logits.clone();
        up[0] += bump;
        prop_assert!(cross_entropy(&up, 0, &w).unwrap() < cross_entropy(&logits, 0, &w).unwrap());
    }

    #[test]
    fn l1_is_nonnegative_and_zero_only_on_equality(
        a in proptest::collection::vec(-3.0f64..3.0, 6),
        b in proptest::collection::vec(-3.0f64..3.0, 6),
    ) {
        let l = layerwise_l1(&mat(2, 3, a.clone()), &mat(2, 3, b.clone())).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, a == b);
    }

    #[test]
    fn forecast_loss_ignores_layer_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = || mat(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
        let target = r();
        let layers = vec![r(), r(), r()];
        let mut rev = layers.clone();
        rev.reverse();
        let (a, pa) = forecast_loss(&layers, &target).unwrap();
        let (b, _) = forecast_loss(&rev, &target).unwrap();
        prop_assert!((a - b).abs() <= 1e-15);
        // independent recomputation
        let manual: f64 = layers
            .iter()
            .map(|l| l.data().iter().zip(target.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 6.0)
            .sum::<f64>() / 3.0;
        prop_assert!((a - manual).abs() <= 1e-12);
        prop_assert!((a - pa.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
    }
}

#[test]
fn uniform_logits_give_log_class_count() {
    for c in 2..8 {
        let ce = cross_entropy(&vec![0.3; c], 1, &ClassWeights::uniform(c)).unwrap();
        assert!((ce - (c as f64).ln()).abs() < 1e-14);
    }
}

#[test]
fn fine_class_total_is_bitwise_cross_entropy() {
    let logits = [0.2, -1.3, 0.7, 2.2];
    let w = ClassWeights::new(vec![1.0, 2.0, 0.5, 1.5]).unwrap();
    let ce = cross_entropy(&logits, 2, &w).unwrap();
    let b = combined_loss(
        LossMode::FineClass,
        &LossComponents {
            classification: Some(ce),
            per_layer: Some(vec![0.1, 0.2]),
        },
    )
    .unwrap();
    assert_eq!(b.total.to_bits(), ce.to_bits());
    assert_eq!(b.forecast, None);
    let p = combined_loss(
        LossMode::Pretrain,
        &LossComponents {
            classification: Some(1.0),
            per_layer: Some(vec![0.25, 0.75]),
        },
    )
    .unwrap();
    assert_eq!(p.total, 1.5);
    assert!(combined_loss(LossMode::Scratch, &LossComponents { classification: Some(1.0), per_layer: None }).is_err());
}

#[test]
fn fine_both_gradient_is_sum_of_branch_gradients() {
    let cfg = ModelConfig {
        pose_dim: 6,
        d_model: 8,
        layers: 2,
        heads: 2,
        ff_dim: 16,
        classes: 3,
        input_frames: 4,
        forecast_frames: 3,
        dropout: 0.0,
    };
    let params = ModelParams::init(&cfg, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut r = |n: usize, m: usize| mat(n, m, (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect());
    let x = r(4, 6);
    let target = r(3, 6);
    let w = ClassWeights::new(vec![0.5, 1.0, 2.0]).unwrap();
    // which: 0 → total, 1 → L_c only, 2 → L_f only
    let grads = |which: u8| -> Vec<Tensor> {
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &params, |_| true);
        let xv = tape.constant(x.clone());
        let tv = tape.constant(target.clone());
        let out = Graph::new(&mut tape, &params, &vars).forward(xv, true).unwrap();
        let l = combined_loss_var(&mut tape, LossMode::FineBoth, out.logits, 2, &w, Some((&out.per_layer_preds, tv)))
            .unwrap();
        let loss = match which {
            0 => l.total,
            1 => l.classification,
            _ => l.forecast.unwrap(),
        };
        let g = tape.backward(loss).unwrap();
        vars.iter().map(|&v| g.get(v).unwrap().clone()).collect()
    };
    let (t, c, f) = (grads(0), grads(1), grads(2));
    for i in 0..t.len() {
        for k in 0..t[i].len() {
            let diff = t[i].data()[k] - c[i].data()[k] - f[i].data()[k];
            assert!(diff.abs() <= 1e-12 * (1.0 + t[i].data()[k].abs()), "{}", params.specs()[i].name);
        }
    }
}
