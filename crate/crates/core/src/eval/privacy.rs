//! Feature-inference probe on protected representations: how well can an
//! attacker holding `a_i` recover an insensitive platform's input field?

use serde::{Deserialize, Serialize};

use super::attack::{probe, AttackScore, AttackerConfig};
use crate::data::Column;
use crate::nn::Tensor;
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Class targets of a probed categorical field.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTarget {
    pub field: String,
    pub classes: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl ProbeTarget {
    /// Rows `train_rows` / `test_rows` of a field column. Numeric fields are
    /// rejected: the probe is a classifier.
    pub fn from_column(field: &str, column: &Column, classes: usize, train_rows: &[usize], test_rows: &[usize]) -> Result<Self> {
        let Column::Categorical(values) = column else {
            return Err(Error::Evaluation(format!("field `{field}` is numeric; only categorical fields can be probed")));
        };
        let pick = |rows: &[usize]| rows.iter().map(|&r| values[r] as usize).collect();
        Ok(Self {
            field: field.to_string(),
            classes,
            train: pick(train_rows),
            test: pick(test_rows),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyScore {
    pub field: String,
    /// One ensemble score per protected representation.
    pub per_representation: Vec<AttackScore>,
    /// Mean over representations and attackers.
    pub mean: f64,
}

/// Probes `target` from every protected representation and averages.
pub fn privacy_inference_attack(
    train_protected: &[Tensor],
    test_protected: &[Tensor],
    target: &ProbeTarget,
    cfg: &AttackerConfig,
    seed: u64,
) -> Result<PrivacyScore> {
    if train_protected.len() != test_protected.len() || train_protected.is_empty() {
        return Err(Error::Evaluation("need matching, non-empty train/test protected representations".into()));
    }
    let per_representation = train_protected
        .iter()
        .zip(test_protected)
        .enumerate()
        .map(|(i, (tr, te))| {
            probe(tr, &target.train, te, &target.test, target.classes, cfg, derive_seed(seed, &format!("protected/{i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = per_representation.iter().map(|s| s.mean).sum::<f64>() / per_representation.len() as f64;
    Ok(PrivacyScore {
        field: target.field.clone(),
        per_representation,
        mean,
    })
}
