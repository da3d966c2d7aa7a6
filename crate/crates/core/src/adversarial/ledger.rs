//! Which loss terms may move which parameter blocks, and in which direction.
//!
//! The instrumented training round hands every applied update to
//! [`SignLedger::verify`] together with independently computed per-term
//! gradients; the applied gradient must equal the declared signed, weighted
//! sum of those terms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative tolerance of [`SignLedger::verify`].
pub const LEDGER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockGroup {
    Encoder(usize),
    Aggregator,
    TaskHead,
    Mapper(usize),
    Contrastive(usize),
    Bias(usize),
}

impl fmt::Display for BlockGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockGroup::Encoder(i) => write!(f, "encoder{i}"),
            BlockGroup::Aggregator => write!(f, "aggregator"),
            BlockGroup::TaskHead => write!(f, "task"),
            BlockGroup::Mapper(i) => write!(f, "mapper{i}"),
            BlockGroup::Contrastive(i) => write!(f, "contrastive{i}"),
            BlockGroup::Bias(i) => write!(f, "bias{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossTerm {
    /// Task loss `L^t`.
    Task,
    /// Contrastive discrimination loss `L^p_i`.
    ContrastiveDisc(usize),
    /// Contrastive adversarial loss `L^c_i`.
    ContrastiveAdv(usize),
    /// Bias discrimination loss `L^d_i`.
    BiasDisc(usize),
    /// Adversarial loss `L^a_i` on the unified representation.
    Adversarial(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Descend,
    Ascend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        }
    }
}

/// Outcome of one verified update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub block: BlockGroup,
    pub terms: Vec<LossTerm>,
    pub max_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignLedger {
    declared: BTreeMap<BlockGroup, Vec<(LossTerm, Direction)>>,
}

impl SignLedger {
    /// The declared table for `n` insensitive and `m` sensitive platforms.
    pub fn new(n: usize, m: usize) -> Self {
        let mut declared = BTreeMap::new();
        let shared: Vec<_> = std::iter::once((LossTerm::Task, Direction::Descend))
            .chain((0..m).map(|i| (LossTerm::Adversarial(i), Direction::Ascend)))
            .collect();
        for i in 0..n {
            declared.insert(BlockGroup::Encoder(i), shared.clone());
        }
        declared.insert(BlockGroup::Aggregator, shared);
        declared.insert(BlockGroup::TaskHead, vec![(LossTerm::Task, Direction::Descend)]);
        for i in 0..m {
            declared.insert(
                BlockGroup::Mapper(i),
                vec![
                    (LossTerm::ContrastiveAdv(i), Direction::Ascend),
                    (LossTerm::BiasDisc(i), Direction::Descend),
                ],
            );
            declared.insert(BlockGroup::Contrastive(i), vec![(LossTerm::ContrastiveDisc(i), Direction::Descend)]);
            declared.insert(BlockGroup::Bias(i), vec![(LossTerm::BiasDisc(i), Direction::Descend)]);
        }
        Self { declared }
    }

    pub fn declared(&self, block: BlockGroup) -> &[(LossTerm, Direction)] {
        self.declared.get(&block).map_or(&[], Vec::as_slice)
    }

    pub fn direction(&self, block: BlockGroup, term: LossTerm) -> Option<Direction> {
        self.declared(block).iter().find(|(t, _)| *t == term).map(|(_, d)| *d)
    }

    /// Compares the gradient actually applied to `block` with
    /// `Σ sign(term) · weight · gradient(term)`. A term the block does not
    /// declare is an error; a numeric mismatch is reported in the check.
    pub fn verify(&self, block: BlockGroup, applied: &[f64], terms: &[(LossTerm, f64, Vec<f64>)]) -> Result<LedgerCheck> {
        let mut expected = vec![0.0; applied.len()];
        for (term, weight, grad) in terms {
            let dir = self.direction(block, *term).ok_or_else(|| {
                Error::Protocol(format!("sign ledger: {term:?} may not update {block}"))
            })?;
            if grad.len() != applied.len() {
                return Err(Error::dim("sign ledger", applied.len(), grad.len()));
            }
            for (e, g) in expected.iter_mut().zip(grad) {
                *e += dir.sign() * weight * g;
            }
        }
        let max_error = applied
            .iter()
            .zip(&expected)
            .map(|(a, e)| (a - e).abs() / e.abs().max(1.0))
            .fold(0.0, f64::max);
        Ok(LedgerCheck {
            block,
            terms: terms.iter().map(|(t, _, _)| *t).collect(),
            max_error,
            passed: max_error <= LEDGER_TOLERANCE,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapper_ascends_contrastive_and_descends_bias() {
        let ledger = SignLedger::new(3, 2);
        assert_eq!(ledger.direction(BlockGroup::Mapper(1), LossTerm::ContrastiveAdv(1)), Some(Direction::Ascend));
        assert_eq!(ledger.direction(BlockGroup::Mapper(1), LossTerm::BiasDisc(1)), Some(Direction::Descend));
        assert_eq!(ledger.direction(BlockGroup::Aggregator, LossTerm::ContrastiveAdv(0)), None);
    }

    #[test]
    fn wrong_sign_fails_the_check() {
        let ledger = SignLedger::new(1, 1);
        let terms = vec![(LossTerm::Task, 1.0, vec![1.0, 2.0]), (LossTerm::Adversarial(0), 10.0, vec![0.1, 0.0])];
        let ok = ledger.verify(BlockGroup::Aggregator, &[0.0, 2.0], &terms).unwrap();
        assert!(ok.passed);
        let bad = ledger.verify(BlockGroup::Aggregator, &[2.0, 2.0], &terms).unwrap();
        assert!(!bad.passed);
        assert!(ledger.verify(BlockGroup::Bias(0), &[0.0, 0.0], &terms).is_err());
    }
}
