//! Prediction metrics: per-position accuracy, whole-sequence accuracy, and
//! binary classification accuracy, all with optional ignored positions.

use crate::error::{LabError, Result};

/// Fraction of non-ignored positions where pred == target.
pub fn elementwise_accuracy(
    preds: &[usize],
    targets: &[usize],
    ignore: Option<usize>,
) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(LabError::dim("elementwise_accuracy", &[preds.len()], &[targets.len()]));
    }
    let mut hit = 0usize;
    let mut total = 0usize;
    for (&p, &t) in preds.iter().zip(targets.iter()) {
        if Some(t) == ignore {
            continue;
        }
        total += 1;
        if p == t {
            hit += 1;
        }
    }
    if total == 0 {
        return Err(LabError::contract("every position is ignored"));
    }
    Ok(hit as f64 / total as f64)
}

/// Fraction of length-`seq_len` samples whose non-ignored positions are all
/// correct.
pub fn full_sequence_accuracy(
    preds: &[usize],
    targets: &[usize],
    seq_len: usize,
    ignore: Option<usize>,
) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(LabError::dim("full_sequence_accuracy", &[preds.len()], &[targets.len()]));
    }
    if seq_len == 0 || preds.len() % seq_len != 0 {
        return Err(LabError::contract(
            "prediction length must be a positive multiple of the sequence length",
        ));
    }
    let n = preds.len() / seq_len;
    let mut hit = 0usize;
    for s in 0..n {
        let ok = (0..seq_len).all(|k| {
            let t = targets[s * seq_len + k];
            Some(t) == ignore || preds[s * seq_len + k] == t
        });
        if ok {
            hit += 1;
        }
    }
    Ok(hit as f64 / n as f64)
}

/// Accuracy over class labels; alias of elementwise over unmasked scalars.
pub fn binary_accuracy(preds: &[usize], targets: &[usize]) -> Result<f64> {
    elementwise_accuracy(preds, targets, None)
}

/// Row-wise argmax of an n x v logit matrix.
pub fn argmax_rows(logits: &[f64], v: usize) -> Vec<usize> {
    logits
        .chunks_exact(v)
        .map(|row| {
            let mut best = 0usize;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Mean and standard error of the mean (sample std with n-1, divided by
/// sqrt n). A single value has SEM 0.
pub fn mean_sem(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
