use crate::error::{Error, Result};

/// Macro-averaged scores over all classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// `counts[label][pred]`.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::invalid(format!(
                "class index out of range: pred {p}, label {l}, classes {classes}"
            )));
        }
        counts[l][p] += 1;
    }
    Ok(counts)
}

/// Per-class precision and recall with 0/0 taken as 0, per-class F1 = 2PR/(P+R)
/// (0 when P+R = 0), then unweighted means over all `classes`, including classes
/// that never occur.
pub fn macro_metrics(preds: &[usize], labels: &[usize], classes: usize) -> Result<MacroMetrics> {
    let cm = confusion_matrix(preds, labels, classes)?;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let (mut f1, mut precision, mut recall) = (0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = cm[c][c];
        let predicted: usize = (0..classes).map(|l| cm[l][c]).sum();
        let actual: usize = cm[c].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        precision += p;
        recall += r;
        f1 += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    let k = classes as f64;
    Ok(MacroMetrics {
        f1: f1 / k,
        precision: precision / k,
        recall: recall / k,
    })
}

/// Argmax of the mean logit vector over one subject's clips; ties go to the
/// lower class index.
pub fn aggregate_subject(clip_logits: &[Vec<f64>]) -> Result<usize> {
    Ok(argmax(&mean_logits(clip_logits)?))
}

pub fn mean_logits(clip_logits: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = clip_logits
        .first()
        .ok_or_else(|| Error::invalid("subject has no clips to aggregate"))?;
    let c = first.len();
    if c == 0 || clip_logits.iter().any(|l| l.len() != c) {
        return Err(Error::invalid("clip logit vectors must share a nonzero length"));
    }
    let mut mean = vec![0.0; c];
    for l in clip_logits {
        for (m, v) in mean.iter_mut().zip(l) {
            *m += v;
        }
    }
    let n = clip_logits.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    // Identical values are reported exactly, without summation rounding.
    if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
