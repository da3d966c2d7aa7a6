//! Attack-based evaluation: fairness probes on unified representations,
//! feature-inference probes on protected representations, task metrics.
//!
//! Attackers only ever see detached copies of representations; nothing here
//! can reach model parameters.

mod attack;
mod metrics;
mod privacy;
mod report;

pub use attack::{attack_f1, probe, train_attacker_ensemble, AttackScore, Attacker, AttackerConfig, AttackerEnsemble};
pub use metrics::{accuracy, macro_f1, majority_baseline, shuffled_label_baseline, task_metrics, TaskMetrics};
pub use privacy::{privacy_inference_attack, PrivacyScore, ProbeTarget};
pub use report::{CommStats, FairnessProbe, MetricsReport, PrivacyProbe};

use crate::nn::Tensor;

/// Row-wise argmax, first maximum on ties.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
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
