//! Fair representation learning machinery: in-batch negative sampling, the
//! contrastive discriminator game on protected representations, the bias
//! discriminator game, and assembly of the gradient on the unified
//! representation.
//!
//! Every function here is pure over the state it is handed; routing between
//! platforms is the protocol module's job.

mod games;
mod ledger;
mod negatives;

use serde::{Deserialize, Serialize};

pub use games::{
    adversarial_grad_on_protected, adversarial_grad_on_unified, bias_discriminator_step,
    bias_loss, combine_overall_grad, contrastive_adversarial_grad, contrastive_discriminator_step,
    contrastive_loss, BiasStep, ContrastiveEval,
};
pub use ledger::{BlockGroup, Direction, LedgerCheck, LossTerm, SignLedger, LEDGER_TOLERANCE};
pub use negatives::{rank_and_select_negative, relevance_pool, select_negatives, ContrastiveContext};

use crate::{Error, Result};

/// Per-sensitive-feature loss weights: `lambda` scales the adversarial
/// gradient on the unified representation, `gamma` the contrastive
/// adversarial ascent on the mapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl LossWeights {
    pub fn new(lambda: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let w = Self { lambda, gamma };
        w.validate()?;
        Ok(w)
    }

    /// All weights zero: plain vertical federated learning.
    pub fn zeros(m: usize) -> Self {
        Self {
            lambda: vec![0.0; m],
            gamma: vec![0.0; m],
        }
    }

    /// ADULT defaults: λ = (1e2, 1e1) for (gender, age), γ = 0.25.
    pub fn adult() -> Self {
        Self {
            lambda: vec![1e2, 1e1],
            gamma: vec![0.25, 0.25],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.len() != self.gamma.len() {
            return Err(Error::Config(format!(
                "{} lambda weights but {} gamma weights",
                self.lambda.len(),
                self.gamma.len()
            )));
        }
        if let Some(w) = self.lambda.iter().chain(&self.gamma).find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Config(format!("loss weight {w} must be finite and ≥ 0")));
        }
        Ok(())
    }
}
