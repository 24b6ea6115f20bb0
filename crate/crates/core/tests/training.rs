//! Training loops, strategy semantics and checkpoints.

mod common;

use common::{clips, small_config, synth};
use gaitcast::model::{forward, ModelParams, ParamGroup};
use gaitcast::objectives::{inverse_frequency_weights, ClassWeights, LossMode};
use gaitcast::training::{
    batch_gradients, examples_from_clips, finetune, pretrain, train_scratch, Checkpoint, Strategy,
    TrainConfig, TrainableSet,
};
use gaitcast::Error;

fn cfg(strategy: Strategy, epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::new(strategy);
    c.epochs = epochs;
    if strategy == Strategy::FineBothThenClass {
        c.stage_split = Some((epochs / 2, epochs - epochs / 2));
    }
    c.optimizer.learning_rate = 1e-3;
    c.seed = 7;
    c
}

fn group_tensors(params: &ModelParams, group: ParamGroup) -> Vec<(String, Vec<u64>)> {
    params
        .specs()
        .iter()
        .enumerate()
        .filter(|(i, _)| params.group(*i) == group)
        .map(|(i, s)| (s.name.clone(), params.get(i).data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn one_epoch_gives_one_history_record() {
    let data = clips(4, 1, 3);
    assert_eq!(data.len(), 4);
    let ck = pretrain(&data, &small_config(4), &cfg(Strategy::Pretrain, 1), None).unwrap();
    assert_eq!(ck.history.len(), 1);
    assert_eq!(ck.epoch(), 1);
    assert!(ck.history[0].forecast.is_some());
}

#[test]
fn same_seed_gives_identical_runs() {
    let data = clips(3, 3, 4);
    let model = small_config(3);
    let tc = cfg(Strategy::Pretrain, 3);
    let a = pretrain(&data, &model, &tc, None).unwrap();
    let b = pretrain(&data, &model, &tc, None).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    assert_eq!(a.to_bytes(), b.to_bytes());

    let mut other = tc.clone();
    other.seed = 8;
    let c = pretrain(&data, &model, &other, None).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn pretrain_loss_falls_below_a_fifth_of_first_epoch() {
    let data = clips(4, 8, 1);
    assert_eq!(data.len(), 32);
    let ck = pretrain(&data, &small_config(4), &cfg(Strategy::Pretrain, 200), None).unwrap();
    let first = ck.history[0].total;
    let last = ck.history[199].total;
    assert!(last < 0.2 * first, "first {first}, last {last}");
}

#[test]
fn scratch_defaults_and_decreasing_loss() {
    assert_eq!(TrainConfig::new(Strategy::Scratch).epochs, 200);
    assert_eq!(TrainConfig::new(Strategy::Pretrain).epochs, 100);
    let data = clips(4, 2, 2);
    let tc = cfg(Strategy::Scratch, 40);
    let ck = train_scratch(&data, &small_config(4), &tc, None).unwrap();
    let mean = |r: &[gaitcast::training::EpochRecord]| r.iter().map(|e| e.total).sum::<f64>() / r.len() as f64;
    assert!(mean(&ck.history[30..]) < mean(&ck.history[..10]));
    let again = train_scratch(&data, &small_config(4), &tc, None).unwrap();
    assert_eq!(ck.history, again.history);
}

#[test]
fn empty_dataset_is_an_error() {
    let err = pretrain(&[], &small_config(4), &cfg(Strategy::Pretrain, 1), None).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn wrong_strategy_for_entry_point_is_rejected() {
    let data = clips(4, 1, 3);
    assert!(pretrain(&data, &small_config(4), &cfg(Strategy::Scratch, 1), None).is_err());
    assert!(train_scratch(&data, &small_config(4), &cfg(Strategy::Pretrain, 1), None).is_err());
}

#[test]
fn fine_class_leaves_everything_but_the_head_bitwise_unchanged() {
    let base = Checkpoint::untrained(ModelParams::init(&small_config(4), 1).unwrap());
    let data = clips(4, 2, 5);
    let tuned = finetune(&base, &data, 4, &cfg(Strategy::FineClass, 10), None).unwrap();
    assert_eq!(tuned.history.len(), 10);
    assert!(tuned.history.iter().all(|r| r.forecast.is_none()));
    for group in [ParamGroup::Forecast, ParamGroup::Encoder, ParamGroup::Embedding] {
        assert_eq!(
            group_tensors(&base.params, group),
            group_tensors(&tuned.params, group),
            "{group:?} changed"
        );
    }
    assert_ne!(
        group_tensors(&base.params, ParamGroup::Classifier),
        group_tensors(&tuned.params, ParamGroup::Classifier)
    );
}

#[test]
fn class_stage_can_optionally_train_the_encoder() {
    let base = Checkpoint::untrained(ModelParams::init(&small_config(4), 1).unwrap());
    let data = clips(4, 1, 5);
    let mut tc = cfg(Strategy::FineClass, 2);
    tc.class_stage_trains_encoder = true;
    let tuned = finetune(&base, &data, 4, &tc, None).unwrap();
    assert_eq!(
        group_tensors(&base.params, ParamGroup::Forecast),
        group_tensors(&tuned.params, ParamGroup::Forecast)
    );
    assert_ne!(
        group_tensors(&base.params, ParamGroup::Encoder),
        group_tensors(&tuned.params, ParamGroup::Encoder)
    );
}

#[test]
fn both_then_class_runs_both_stages_with_visible_boundary() {
    let base = Checkpoint::untrained(ModelParams::init(&small_config(4), 1).unwrap());
    let data = clips(4, 1, 6);
    let mut tc = cfg(Strategy::FineBothThenClass, 100);
    tc.stage_split = Some((50, 50));
    let mut log = Vec::new();
    let tuned = finetune(&base, &data, 4, &tc, Some(&mut log)).unwrap();
    assert_eq!(tuned.history.len(), 100);
    assert!(tuned.history[..50].iter().all(|r| r.stage == "both" && r.forecast.is_some()));
    assert!(tuned.history[50..].iter().all(|r| r.stage == "class" && r.forecast.is_none()));
    assert_eq!(
        tuned.history.iter().map(|r| r.epoch).collect::<Vec<_>>(),
        (1..=100).collect::<Vec<_>>()
    );
    let log = String::from_utf8(log).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 100);
    assert!(lines[49].starts_with("50\tboth\t"));
    assert!(lines[50].starts_with("51\tclass\t"));
    assert_eq!(lines[50].split('\t').nth(3), Some("-"));
    assert_eq!(lines[0].split('\t').count(), 6);
}

#[test]
fn stage_split_must_sum_to_epochs() {
    let mut tc = TrainConfig::new(Strategy::FineBothThenClass);
    assert_eq!(tc.stage_split, Some((50, 50)));
    tc.stage_split = Some((30, 50));
    let err = tc.validate().unwrap_err().to_string();
    assert!(err.contains("30+50"), "{err}");
}

#[test]
fn head_is_reinitialized_when_class_count_changes() {
    let activity = pretrain(&clips(6, 1, 2), &small_config(6), &cfg(Strategy::Pretrain, 1), None).unwrap();
    assert_eq!(activity.params.by_name("classifier.weight").unwrap().shape(), &[16, 6]);
    let severity = clips(4, 1, 9);
    let tuned = finetune(&activity, &severity, 4, &cfg(Strategy::FineBoth, 1), None).unwrap();
    assert_eq!(tuned.config().classes, 4);
    assert_eq!(tuned.params.by_name("classifier.weight").unwrap().shape(), &[16, 4]);
}

#[test]
fn pose_dimension_mismatch_is_rejected() {
    let mut other = small_config(4);
    other.pose_dim = 15;
    let base = Checkpoint::untrained(ModelParams::init(&other, 1).unwrap());
    let err = finetune(&base, &clips(4, 1, 1), 4, &cfg(Strategy::FineBoth, 1), None).unwrap_err();
    assert!(err.to_string().contains("pose dimension"), "{err}");
}

#[test]
fn fine_class_mode_sends_no_gradient_into_forecasting_branch() {
    let model = small_config(4);
    let params = ModelParams::init(&model, 3).unwrap();
    let examples = examples_from_clips(&clips(4, 1, 2), &model).unwrap();
    let batch: Vec<_> = examples.iter().collect();
    let w = ClassWeights::uniform(4);
    // Every tensor is registered as trainable; decoder and ψ still get exact zeros.
    let (grads, loss) = batch_gradients(&params, &batch, LossMode::FineClass, TrainableSet::All, &w, None).unwrap();
    assert!(loss.forecast.is_none());
    for (i, g) in grads.iter().enumerate() {
        let g = g.as_ref().unwrap();
        if params.group(i) == ParamGroup::Forecast {
            assert!(g.data().iter().all(|&v| v == 0.0), "{}", params.specs()[i].name);
        }
    }
}

#[test]
fn fine_both_gradient_flow_reaches_every_tensor() {
    let model = small_config(4);
    let params = ModelParams::init(&model, 11).unwrap();
    let examples = examples_from_clips(&clips(4, 4, 12), &model).unwrap();
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let w = inverse_frequency_weights(&labels, 4).unwrap();
    let mut touched = vec![false; params.tensors().len()];
    for chunk in examples.chunks(4) {
        let batch: Vec<_> = chunk.iter().collect();
        let (grads, _) = batch_gradients(&params, &batch, LossMode::FineBoth, TrainableSet::All, &w, None).unwrap();
        for (t, g) in touched.iter_mut().zip(&grads) {
            *t |= g.as_ref().unwrap().data().iter().any(|&v| v != 0.0);
        }
    }
    for (i, t) in touched.iter().enumerate() {
        assert!(t, "no gradient reached {}", params.specs()[i].name);
    }
}

#[test]
fn checkpoint_save_load_forward_is_bitwise_stable() {
    let data = clips(4, 1, 13);
    let ck = pretrain(&data, &small_config(4), &cfg(Strategy::Pretrain, 2), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.history, ck.history);
    assert_eq!(back.train_echo, ck.train_echo);
    let x = examples_from_clips(&data, ck.config()).unwrap()[0].input.clone();
    let a = forward(&x, &ck.params).unwrap();
    let b = forward(&x, &back.params).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.logits), bits(&b.logits));
    for (p, q) in a.per_layer_preds.iter().zip(&b.per_layer_preds) {
        assert_eq!(bits(p.data()), bits(q.data()));
    }
    assert!(ck.header().contains("train.seed=7"));
    assert!(ck.header().contains("model.d_model=16"));
    assert!(!ck.header().contains("wall"));
}

#[test]
fn non_finite_loss_aborts_training() {
    let model = small_config(4);
    let mut params = ModelParams::init(&model, 1).unwrap();
    params.get_mut(0).data_mut()[0] = f64::NAN;
    let base = Checkpoint::untrained(params);
    let err = finetune(&base, &clips(4, 1, 1), 4, &cfg(Strategy::FineBoth, 1), None).unwrap_err();
    assert_eq!(err.category(), "numeric");
}

#[test]
fn disjoint_prefixes_keep_subject_sets_apart() {
    let a = synth(6, 2, 1, "act");
    let b = synth(4, 3, 1, "sev");
    let sa = a.manifest.subjects();
    assert!(b.manifest.subjects().iter().all(|s| !sa.contains(s)));
}
