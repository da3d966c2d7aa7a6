use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::attack::AttackScore;
use super::metrics::TaskMetrics;
use super::privacy::PrivacyScore;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommStats {
    pub rounds: u64,
    pub messages: usize,
    /// Fairness traffic of a full-batch round.
    pub fairness_floats_per_round: Option<usize>,
    /// Every round carried exactly `4 · E · Σ H_i` fairness floats for its
    /// own batch size `E`.
    pub formula_holds: bool,
    pub fairness_floats_total: usize,
}

/// Fairness attack on the unified representation for one sensitive feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessProbe {
    pub score: AttackScore,
    /// Analytic shuffled-label macro-F1 of the test labels.
    pub random_baseline: f64,
    pub majority_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyProbe {
    pub score: PrivacyScore,
    pub random_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskMetrics,
    pub fairness: BTreeMap<String, FairnessProbe>,
    pub privacy: BTreeMap<String, PrivacyProbe>,
    pub comm: CommStats,
    pub config_fingerprint: String,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }

    /// Mean privacy F1 and mean random baseline over probed fields.
    pub fn privacy_summary(&self) -> Option<(f64, f64)> {
        if self.privacy.is_empty() {
            return None;
        }
        let n = self.privacy.len() as f64;
        Some((
            self.privacy.values().map(|p| p.score.mean).sum::<f64>() / n,
            self.privacy.values().map(|p| p.random_baseline).sum::<f64>() / n,
        ))
    }

    pub fn table_header(&self) -> String {
        let mut cols = vec!["fingerprint".to_string(), "accuracy".into(), "task_f1".into()];
        cols.extend(self.fairness.keys().map(|k| format!("fair_{k}")));
        cols.extend(self.privacy.keys().map(|k| format!("priv_{k}")));
        cols.push("fair_floats_per_round".into());
        cols.join("\t")
    }

    /// Tab-separated values in [`table_header`](Self::table_header) order.
    pub fn table_row(&self) -> String {
        let mut row = String::new();
        let _ = write!(row, "{}\t{:.6}\t{:.6}", self.config_fingerprint, self.task.accuracy, self.task.f1);
        for p in self.fairness.values() {
            let _ = write!(row, "\t{:.6}", p.score.mean);
        }
        for p in self.privacy.values() {
            let _ = write!(row, "\t{:.6}", p.score.mean);
        }
        let _ = write!(
            row,
            "\t{}",
            self.comm.fairness_floats_per_round.map_or("-".to_string(), |v| v.to_string())
        );
        row
    }
}
