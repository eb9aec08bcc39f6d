use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-class F1 scores are averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    #[default]
    Macro,
    /// Weighted by true-class support on the mask.
    Weighted,
}

fn confusion(pred: &[usize], truth: &[usize], mask: &[usize], n_classes: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if pred.len() != truth.len() {
        return Err(Error::shape("f1", truth.len(), pred.len()));
    }
    let mut tp = vec![0.0; n_classes];
    let mut fp = vec![0.0; n_classes];
    let mut fn_ = vec![0.0; n_classes];
    for &i in mask {
        let (p, t) = (pred[i], truth[i]);
        if p >= n_classes || t >= n_classes {
            return Err(Error::InvalidParameter(format!(
                "class id out of range for {n_classes} classes at node {i}"
            )));
        }
        if p == t {
            tp[t] += 1.0;
        } else {
            fp[p] += 1.0;
            fn_[t] += 1.0;
        }
    }
    Ok((tp, fp, fn_))
}

fn per_class_f1(tp: &[f64], fp: &[f64], fn_: &[f64]) -> Vec<f64> {
    tp.iter()
        .zip(fp)
        .zip(fn_)
        .map(|((&t, &p), &n)| {
            let denom = 2.0 * t + p + n;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * t / denom
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over all `n_classes` classes.
pub fn macro_f1(pred: &[usize], truth: &[usize], mask: &[usize], n_classes: usize) -> Result<f64> {
    let (tp, fp, fn_) = confusion(pred, truth, mask, n_classes)?;
    let f1 = per_class_f1(&tp, &fp, &fn_);
    Ok(f1.iter().sum::<f64>() / n_classes as f64)
}

pub fn weighted_f1(pred: &[usize], truth: &[usize], mask: &[usize], n_classes: usize) -> Result<f64> {
    let (tp, fp, fn_) = confusion(pred, truth, mask, n_classes)?;
    let f1 = per_class_f1(&tp, &fp, &fn_);
    let support: Vec<f64> = tp.iter().zip(&fn_).map(|(t, n)| t + n).collect();
    Ok(f1.iter().zip(&support).map(|(f, s)| f * s).sum::<f64>() / mask.len() as f64)
}

pub fn f1_score(avg: F1Average, pred: &[usize], truth: &[usize], mask: &[usize], n_classes: usize) -> Result<f64> {
    match avg {
        F1Average::Macro => macro_f1(pred, truth, mask, n_classes),
        F1Average::Weighted => weighted_f1(pred, truth, mask, n_classes),
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hits = mask.iter().filter(|&&i| pred[i] == truth[i]).count();
    Ok(hits as f64 / mask.len() as f64)
}

/// Row-wise argmax, lowest index on ties.
pub fn argmax_rows(m: &crate::linalg::Mat) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Mean and sample standard deviation; the deviation needs two values.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (mean, std)
}
