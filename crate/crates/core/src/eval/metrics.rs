use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fraction of matching positions.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_aligned(truth, pred)?;
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Unweighted mean of per-class F1 over every class that occurs in either
/// the truth or the predictions.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_aligned(truth, pred)?;
    let classes: BTreeSet<usize> = truth.iter().chain(pred).copied().collect();
    let mut total = 0.0;
    for &c in &classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fneg = 0usize;
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / classes.len() as f64)
}

fn check_aligned(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Evaluation(format!(
            "{} labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub accuracy: f64,
    pub f1: f64,
}

pub fn task_metrics(pred: &[usize], labels: &[usize]) -> Result<TaskMetrics> {
    Ok(TaskMetrics {
        accuracy: accuracy(labels, pred)?,
        f1: macro_f1(labels, pred)?,
    })
}

fn histogram(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut h = vec![0; k];
    for &l in labels {
        h[l] += 1;
    }
    h
}

/// Expected macro-F1 of predictions that are a random permutation of the
/// labels: each present class scores its own frequency, so the mean is
/// `1 / K_present`.
pub fn shuffled_label_baseline(labels: &[usize]) -> f64 {
    let present = histogram(labels).iter().filter(|&&c| c > 0).count();
    if present == 0 {
        0.0
    } else {
        1.0 / present as f64
    }
}

/// Macro-F1 of always predicting the most frequent class.
pub fn majority_baseline(labels: &[usize]) -> f64 {
    let h = histogram(labels);
    let present = h.iter().filter(|&&c| c > 0).count();
    let Some(&max) = h.iter().max() else { return 0.0 };
    if present == 0 {
        return 0.0;
    }
    let p = max as f64 / labels.len() as f64;
    (2.0 * p / (1.0 + p)) / present as f64
}
