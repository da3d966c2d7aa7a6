//! Attacker ensembles: independently seeded probes trained on frozen
//! representations.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::macro_f1;
use crate::nn::{softmax_cross_entropy, AdamConfig, Mlp, Module, Tensor};
use crate::rng::{stream, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackerConfig {
    pub count: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    /// Fraction of the attack training set held out for early stopping.
    pub holdout: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            count: 5,
            hidden: 128,
            lr: 1e-3,
            batch: 128,
            holdout: 0.1,
            patience: 3,
            max_epochs: 50,
        }
    }
}

impl AttackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.hidden == 0 || self.batch == 0 || self.max_epochs == 0 {
            return Err(Error::Config("attacker count, width, batch and epochs must be ≥ 1".into()));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::Config(format!("holdout fraction {} outside (0, 1)", self.holdout)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("attacker learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// A probe: per-column standardization fit on its training data, then a
/// two-layer perceptron.
#[derive(Debug, Clone)]
pub struct Attacker {
    mean: Vec<f64>,
    scale: Vec<f64>,
    mlp: Mlp,
}

impl Attacker {
    fn standardize(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let cols = out.cols();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let c = k % cols;
            *v = (*v - self.mean[c]) * self.scale[c];
        }
        out
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(super::argmax_rows(&self.mlp.infer(&self.standardize(x))?))
    }
}

#[derive(Debug, Clone)]
pub struct AttackerEnsemble {
    pub attackers: Vec<Attacker>,
    pub classes: usize,
    pub width: usize,
}

/// Mean and sample standard deviation of per-attacker macro-F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub mean: f64,
    pub std: f64,
    pub per_attacker: Vec<f64>,
}

impl AttackScore {
    pub fn from_scores(per_attacker: Vec<f64>) -> Self {
        let n = per_attacker.len() as f64;
        let mean = per_attacker.iter().sum::<f64>() / n;
        let std = if per_attacker.len() > 1 {
            (per_attacker.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            per_attacker,
        }
    }
}

fn column_stats(x: &Tensor, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let cols = x.cols();
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; cols];
    for &r in rows {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; cols];
    for &r in rows {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let scale = var
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn holdout_loss(mlp: &Mlp, x: &Tensor, y: &[usize]) -> Result<f64> {
    Ok(softmax_cross_entropy(&mlp.infer(x)?, y)?.0)
}

fn train_one(x: &Tensor, labels: &[usize], classes: usize, cfg: &AttackerConfig, rng: &mut StreamRng) -> Result<Attacker> {
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_hold = ((n as f64) * cfg.holdout).round().clamp(1.0, (n - 1) as f64) as usize;
    let (hold, train) = order.split_at(n_hold);
    let (mean, scale) = column_stats(x, train);
    let mut attacker = Attacker {
        mean,
        scale,
        mlp: Mlp::new("attacker", [x.cols(), cfg.hidden, classes], 0.0, AdamConfig::with_lr(cfg.lr), rng)?,
    };
    let xs = attacker.standardize(x);
    let hold_x = xs.select_rows(hold);
    let hold_y: Vec<usize> = hold.iter().map(|&r| labels[r]).collect();
    let mut train = train.to_vec();
    let mut best = (holdout_loss(&attacker.mlp, &hold_x, &hold_y)?, attacker.mlp.clone());
    let mut stale = 0;
    for _ in 0..cfg.max_epochs {
        train.shuffle(rng);
        for chunk in train.chunks(cfg.batch) {
            let bx = xs.select_rows(chunk);
            let by: Vec<usize> = chunk.iter().map(|&r| labels[r]).collect();
            let (logits, trace) = attacker.mlp.forward(&bx, None)?;
            let (_, dlogits) = softmax_cross_entropy(&logits, &by)?;
            attacker.mlp.zero_grad();
            attacker.mlp.backward(&trace, &dlogits)?;
            attacker.mlp.adam_step();
        }
        let loss = holdout_loss(&attacker.mlp, &hold_x, &hold_y)?;
        if loss < best.0 {
            best = (loss, attacker.mlp.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    attacker.mlp = best.1;
    Ok(attacker)
}

/// Trains `cfg.count` attackers on frozen representations, attacker `k`
/// drawing from stream `attacker/{k}` of `seed`.
pub fn train_attacker_ensemble(
    reps: &Tensor,
    labels: &[usize],
    classes: usize,
    cfg: &AttackerConfig,
    seed: u64,
) -> Result<AttackerEnsemble> {
    cfg.validate()?;
    if reps.rows() != labels.len() {
        return Err(Error::dim("train_attacker_ensemble", reps.shape_str(), format!("{} labels", labels.len())));
    }
    if reps.rows() < 2 {
        return Err(Error::Evaluation("attackers need at least two samples".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label(format!("attack label {bad} outside [0, {classes})")));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Evaluation(format!("degenerate attack labels: only class {}", labels[0])));
    }
    let attackers = (0..cfg.count)
        .map(|k| train_one(reps, labels, classes, cfg, &mut stream(seed, &format!("attacker/{k}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackerEnsemble {
        attackers,
        classes,
        width: reps.cols(),
    })
}

/// Per-attacker macro-F1 on held-out representations.
pub fn attack_f1(ens: &AttackerEnsemble, reps: &Tensor, labels: &[usize]) -> Result<AttackScore> {
    if reps.cols() != ens.width {
        return Err(Error::dim("attack_f1", format!("width {}", ens.width), reps.shape_str()));
    }
    let scores = ens
        .attackers
        .iter()
        .map(|a| macro_f1(labels, &a.predict(reps)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackScore::from_scores(scores))
}

/// Trains on `(train, train_labels)` and scores on `(test, test_labels)`.
pub fn probe(
    train: &Tensor,
    train_labels: &[usize],
    test: &Tensor,
    test_labels: &[usize],
    classes: usize,
    cfg: &AttackerConfig,
    seed: u64,
) -> Result<AttackScore> {
    let ens = train_attacker_ensemble(train, train_labels, classes, cfg, seed)?;
    attack_f1(&ens, test, test_labels)
}
