//! Forecasting and classification losses.
//!
//! The forecasting loss of one decoder layer is the mean absolute error over
//! all `M × N` predicted coordinates; the forecasting objective averages it
//! over decoder layers. Classification uses (optionally class-weighted)
//! cross-entropy on logits. Each loss exists as a plain function on values and
//! as a tape builder used during training; both follow the same formula.

use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Non-negative per-class multipliers for cross-entropy.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("class weights are empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "class weights must be finite and non-negative: {weights:?}"
            )));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid("class weights are all zero"));
        }
        Ok(ClassWeights(weights))
    }

    pub fn uniform(classes: usize) -> Self {
        ClassWeights(vec![1.0; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Inverse-frequency weights `w_c = total / (K · count_c)` over the `K` observed
/// classes, so that `Σ count_c · w_c = total`. Unobserved classes get 0.
pub fn inverse_frequency_weights(labels: &[usize], classes: usize) -> Result<ClassWeights> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot weight classes from zero labels"));
    }
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} >= class count {classes}")));
        }
        counts[l] += 1;
    }
    let observed = counts.iter().filter(|&&c| c > 0).count() as f64;
    let total = labels.len() as f64;
    ClassWeights::new(
        counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { total / (observed * c as f64) })
            .collect(),
    )
}

/// Mean absolute error over every entry of one layer's `M × N` forecast.
pub fn layerwise_l1(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op: "layerwise_l1",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean of [`layerwise_l1`] over decoder layers, with the per-layer values.
pub fn forecast_loss(per_layer: &[Tensor], target: &Tensor) -> Result<(f64, Vec<f64>)> {
    if per_layer.is_empty() {
        return Err(Error::invalid("forecast loss needs at least one decoder layer"));
    }
    let layers = per_layer
        .iter()
        .map(|p| layerwise_l1(p, target))
        .collect::<Result<Vec<_>>>()?;
    Ok((mean(&layers), layers))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `−w_label · log softmax(logits)_label`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize, weights: &ClassWeights) -> Result<f64> {
    check_label(logits.len(), label, weights)?;
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(-weights.0[label] * (logits[label] - lse))
}

fn check_label(classes: usize, label: usize, weights: &ClassWeights) -> Result<()> {
    if label >= classes {
        return Err(Error::invalid(format!("label {label} >= class count {classes}")));
    }
    if weights.len() != classes {
        return Err(Error::invalid(format!(
            "{} class weights for {classes} classes",
            weights.len()
        )));
    }
    Ok(())
}

/// Tape version of [`layerwise_l1`].
pub fn layerwise_l1_var(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let abs = tape.abs(diff);
    Ok(tape.mean(abs))
}

/// Tape version of [`forecast_loss`]; returns the mean and each layer's loss.
pub fn forecast_loss_var(tape: &mut Tape, per_layer: &[Var], target: Var) -> Result<(Var, Vec<Var>)> {
    if per_layer.is_empty() {
        return Err(Error::invalid("forecast loss needs at least one decoder layer"));
    }
    let layers = per_layer
        .iter()
        .map(|&p| layerwise_l1_var(tape, p, target))
        .collect::<Result<Vec<_>>>()?;
    let stacked = tape.concat(&layers, 0)?;
    Ok((tape.mean(stacked), layers))
}

/// Tape version of [`cross_entropy`] on `[1, C]` or `[C]` logits.
pub fn cross_entropy_var(tape: &mut Tape, logits: Var, label: usize, weights: &ClassWeights) -> Result<Var> {
    let classes = tape.value(logits).last_dim();
    check_label(classes, label, weights)?;
    let logp = tape.log_softmax_lastdim(logits);
    let axis = tape.value(logp).rank() - 1;
    let picked = tape.slice(logp, axis, label, label + 1)?;
    let picked = tape.sum(picked);
    Ok(tape.scale(picked, -weights.0[label]))
}

/// Which objective a training phase optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossMode {
    /// Activity classification plus forecasting.
    Pretrain,
    /// Both branches during fine-tuning.
    FineBoth,
    /// Classification branch alone; forecasting is not evaluated.
    FineClass,
    /// Both branches from random initialization.
    Scratch,
}

impl LossMode {
    pub fn uses_forecast(self) -> bool {
        !matches!(self, LossMode::FineClass)
    }
}

/// Scalar loss values of one example or one averaged batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub per_layer: Vec<f64>,
    /// `None` when the mode does not evaluate forecasting.
    pub forecast: Option<f64>,
    pub classification: f64,
    pub total: f64,
}

/// Loss inputs that a mode may need.
#[derive(Clone, Debug, Default)]
pub struct LossComponents {
    pub classification: Option<f64>,
    pub per_layer: Option<Vec<f64>>,
}

/// `L_c + L_f` for pre-training, scratch and both-branch fine-tuning; `L_c` alone
/// for class-branch fine-tuning.
pub fn combined_loss(mode: LossMode, components: &LossComponents) -> Result<LossBreakdown> {
    let lc = components
        .classification
        .ok_or_else(|| Error::invalid(format!("{mode:?} needs a classification loss")))?;
    if !mode.uses_forecast() {
        return Ok(LossBreakdown {
            per_layer: Vec::new(),
            forecast: None,
            classification: lc,
            total: lc,
        });
    }
    let layers = components
        .per_layer
        .as_ref()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::invalid(format!("{mode:?} needs per-layer forecast losses")))?;
    let lf = mean(layers);
    Ok(LossBreakdown {
        per_layer: layers.clone(),
        forecast: Some(lf),
        classification: lc,
        total: lc + lf,
    })
}

/// Tape handles of a combined objective.
#[derive(Clone, Debug)]
pub struct LossVars {
    pub total: Var,
    pub classification: Var,
    pub forecast: Option<Var>,
    pub per_layer: Vec<Var>,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        let scalar = |v: Var| tape.value(v).data()[0];
        LossBreakdown {
            per_layer: self.per_layer.iter().map(|&v| scalar(v)).collect(),
            forecast: self.forecast.map(scalar),
            classification: scalar(self.classification),
            total: scalar(self.total),
        }
    }
}

/// Builds the mode's objective on the tape. `forecast` holds the per-layer
/// predictions and the target; it is ignored for [`LossMode::FineClass`].
pub fn combined_loss_var(
    tape: &mut Tape,
    mode: LossMode,
    logits: Var,
    label: usize,
    weights: &ClassWeights,
    forecast: Option<(&[Var], Var)>,
) -> Result<LossVars> {
    let lc = cross_entropy_var(tape, logits, label, weights)?;
    if !mode.uses_forecast() {
        return Ok(LossVars {
            total: lc,
            classification: lc,
            forecast: None,
            per_layer: Vec::new(),
        });
    }
    let (preds, target) =
        forecast.ok_or_else(|| Error::invalid(format!("{mode:?} needs forecast predictions")))?;
    let (lf, per_layer) = forecast_loss_var(tape, preds, target)?;
    let total = tape.add(lc, lf)?;
    Ok(LossVars {
        total,
        classification: lc,
        forecast: Some(lf),
        per_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn l1_zero_for_identical() {
        let a = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(layerwise_l1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn l1_hand_case() {
        let target = Tensor::zeros(&[2, 3]);
        let pred = m(2, 3, &[1.0, -1.0, 0.0, 2.0, 0.0, 1.0]);
        assert_eq!(layerwise_l1(&pred, &target).unwrap(), 5.0 / 6.0);
    }

    #[test]
    fn l1_shape_mismatch() {
        assert!(layerwise_l1(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn l1_scales_with_residual() {
        let target = m(1, 3, &[0.5, 1.0, -1.0]);
        let pred = m(1, 3, &[1.0, 0.0, 2.0]);
        let base = layerwise_l1(&pred, &target).unwrap();
        let k = -2.5;
        let sp = m(1, 3, &pred.data().iter().map(|v| v * k).collect::<Vec<_>>());
        let st = m(1, 3, &target.data().iter().map(|v| v * k).collect::<Vec<_>>());
        assert!((layerwise_l1(&sp, &st).unwrap() - k.abs() * base).abs() < 1e-12);
    }

    #[test]
    fn forecast_loss_single_layer_and_mean() {
        let target = Tensor::zeros(&[1, 2]);
        let p1 = m(1, 2, &[0.2, -0.2]);
        let p2 = m(1, 2, &[0.4, 0.4]);
        let (one, _) = forecast_loss(&[p1.clone()], &target).unwrap();
        assert_eq!(one, layerwise_l1(&p1, &target).unwrap());
        let (two, layers) = forecast_loss(&[p1, p2], &target).unwrap();
        assert!((layers[0] - 0.2).abs() < 1e-15 && (layers[1] - 0.4).abs() < 1e-15);
        assert!((two - 0.3).abs() < 1e-15);
        assert!(forecast_loss(&[], &target).is_err());
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let ce = cross_entropy(&[0.3; 4], 2, &ClassWeights::uniform(4)).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weighted_hand_case() {
        let w = ClassWeights::new(vec![3.0, 1.0]).unwrap();
        let ce = cross_entropy(&[2.0, 0.0], 0, &w).unwrap();
        let expected = 3.0 * (1.0 + (-2.0f64).exp()).ln();
        assert!((ce - expected).abs() < 1e-14);
        assert!((ce - 0.3808).abs() < 5e-5);
    }

    #[test]
    fn label_out_of_range() {
        assert!(cross_entropy(&[0.0, 0.0], 2, &ClassWeights::uniform(2)).is_err());
    }

    #[test]
    fn inverse_frequency_cases() {
        let balanced = inverse_frequency_weights(&[0, 1, 2, 3, 0, 1, 2, 3], 4).unwrap();
        assert_eq!(balanced.as_slice(), &[1.0; 4]);

        let labels: Vec<usize> = [vec![0; 9], vec![1; 3]].concat();
        let w = inverse_frequency_weights(&labels, 2).unwrap();
        assert!((w.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.as_slice()[1] - 2.0).abs() < 1e-15);
        let mass: f64 = 9.0 * w.as_slice()[0] + 3.0 * w.as_slice()[1];
        assert!((mass - 12.0).abs() < 1e-12);

        let single = inverse_frequency_weights(&[2, 2, 2], 4).unwrap();
        assert_eq!(single.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(inverse_frequency_weights(&[], 4).is_err());
    }

    #[test]
    fn class_weights_validation() {
        assert!(ClassWeights::new(vec![0.0, 0.0]).is_err());
        assert!(ClassWeights::new(vec![-1.0, 1.0]).is_err());
    }

    #[test]
    fn combined_modes() {
        let comps = LossComponents {
            classification: Some(1.0),
            per_layer: Some(vec![0.25, 0.75]),
        };
        let pre = combined_loss(LossMode::Pretrain, &comps).unwrap();
        assert_eq!(pre.total, 1.5);
        assert_eq!(pre.forecast, Some(0.5));
        let class = combined_loss(LossMode::FineClass, &comps).unwrap();
        assert_eq!(class.total.to_bits(), 1.0f64.to_bits());
        assert!(class.forecast.is_none());
        let missing = LossComponents {
            classification: Some(1.0),
            per_layer: None,
        };
        assert!(combined_loss(LossMode::FineBoth, &missing).is_err());
        assert!(combined_loss(LossMode::FineClass, &LossComponents::default()).is_err());
    }

    #[test]
    fn tape_losses_match_value_losses() {
        let target = m(2, 3, &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        let p1 = m(2, 3, &[0.0, 0.3, 0.1, 0.0, 0.5, 1.0]);
        let p2 = m(2, 3, &[1.0, -0.3, 0.1, 0.2, 0.0, 0.0]);
        let logits = [0.3, -1.2, 2.0];
        let w = ClassWeights::new(vec![0.5, 2.0, 1.0]).unwrap();

        let mut tape = Tape::new();
        let tv = tape.constant(target.clone());
        let pv = [tape.param(p1.clone()), tape.param(p2.clone())];
        let lv = tape.param(Tensor::matrix(1, 3, logits.to_vec()).unwrap());
        let vars = combined_loss_var(&mut tape, LossMode::Pretrain, lv, 1, &w, Some((&pv, tv))).unwrap();
        let got = vars.breakdown(&tape);

        let (lf, layers) = forecast_loss(&[p1, p2], &target).unwrap();
        let lc = cross_entropy(&logits, 1, &w).unwrap();
        let want = combined_loss(
            LossMode::Pretrain,
            &LossComponents {
                classification: Some(lc),
                per_layer: Some(layers),
            },
        )
        .unwrap();
        assert!((got.total - want.total).abs() < 1e-12);
        assert!((got.forecast.unwrap() - lf).abs() < 1e-12);
        for (a, b) in got.per_layer.iter().zip(&want.per_layer) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
