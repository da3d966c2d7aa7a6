//! Privacy-boundary audit over transcript records.
//!
//! Each record is checked once and yields at most one violation, the most
//! specific that applies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{edge_allowed, PayloadKind, Role, Transcript, TranscriptRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Raw feature values left the platform that holds them.
    RawFeatureLeak,
    /// A local representation went somewhere other than the server.
    LocalRepMisrouted,
    /// The unified representation reached the task platform unperturbed
    /// while local differential privacy is on.
    UnperturbedUnified,
    /// The unified representation reached a sensitive platform.
    UnifiedToSensitive,
    /// Sensitive labels left their platform.
    SensitiveLabelLeak,
    /// Any other message on an edge the protocol does not allow.
    IllegalEdge,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditPolicy {
    pub ldp_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Position of the record in the transcript.
    pub index: usize,
    pub round: u64,
    pub kind: ViolationKind,
    pub sender: Role,
    pub receiver: Role,
    pub payload: PayloadKind,
}

pub fn classify(rec: &TranscriptRecord, policy: &AuditPolicy) -> Option<ViolationKind> {
    use PayloadKind as K;
    let crossing = rec.sender != rec.receiver;
    match rec.kind {
        K::RawFeatures if crossing => return Some(ViolationKind::RawFeatureLeak),
        K::SensitiveLabels if crossing => return Some(ViolationKind::SensitiveLabelLeak),
        K::LocalRepUpload if rec.receiver != Role::Server => return Some(ViolationKind::LocalRepMisrouted),
        K::UnifiedRepToTask if matches!(rec.receiver, Role::Sensitive(_)) => {
            return Some(ViolationKind::UnifiedToSensitive)
        }
        K::UnifiedRepToTask if rec.receiver == Role::Task && policy.ldp_enabled && !rec.ldp => {
            return Some(ViolationKind::UnperturbedUnified)
        }
        _ => {}
    }
    (!edge_allowed(rec.sender, rec.receiver, rec.kind)).then_some(ViolationKind::IllegalEdge)
}

pub fn audit_transcript(t: &Transcript, policy: &AuditPolicy) -> Vec<Violation> {
    t.records()
        .iter()
        .enumerate()
        .filter_map(|(index, rec)| {
            classify(rec, policy).map(|kind| Violation {
                index,
                round: rec.round,
                kind,
                sender: rec.sender,
                receiver: rec.receiver,
                payload: rec.kind,
            })
        })
        .collect()
}

/// Floats carried by the fairness machinery: protected representation
/// uploads plus the two gradient returns.
pub fn fairness_comm_cost(t: &Transcript) -> usize {
    t.records().iter().filter(|r| r.kind.is_fairness()).map(|r| r.float_count).sum()
}

/// [`fairness_comm_cost`] split by round.
pub fn fairness_traffic_by_round(t: &Transcript) -> BTreeMap<u64, usize> {
    let mut out = BTreeMap::new();
    for r in t.records() {
        if r.kind.is_fairness() {
            *out.entry(r.round).or_insert(0) += r.float_count;
        }
    }
    out
}

/// `4 · E · Σ H_i`: two uploads of `a_i` and two gradient returns per
/// sensitive feature.
pub fn expected_fairness_traffic(batch: usize, protected_widths: &[usize]) -> usize {
    4 * batch * protected_widths.iter().sum::<usize>()
}

/// Observed fairness traffic of one round next to `4 · E · Σ H_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub round: u64,
    /// Sample ids sent to the first insensitive platform.
    pub batch: usize,
    pub observed: usize,
    pub expected: usize,
}

impl RoundTraffic {
    pub fn matches(&self) -> bool {
        self.observed == self.expected
    }
}

/// Per-round fairness traffic checked against the formula. The batch size of
/// each round is read off its `SampleIds` message to `insensitive:0`.
pub fn traffic_check(t: &Transcript, protected_widths: &[usize]) -> Vec<RoundTraffic> {
    let observed = fairness_traffic_by_round(t);
    let mut batches: BTreeMap<u64, usize> = BTreeMap::new();
    for r in t.records() {
        if r.kind == PayloadKind::SampleIds && r.sender == Role::Task && r.receiver == Role::Insensitive(0) {
            batches.entry(r.round).or_insert(r.shape[0]);
        }
    }
    batches
        .into_iter()
        .map(|(round, batch)| RoundTraffic {
            round,
            batch,
            observed: observed.get(&round).copied().unwrap_or(0),
            expected: expected_fairness_traffic(batch, protected_widths),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub messages: usize,
    pub violations: Vec<Violation>,
    pub counts: BTreeMap<String, usize>,
    pub fairness_traffic: BTreeMap<u64, usize>,
}

impl AuditReport {
    pub fn build(t: &Transcript, policy: &AuditPolicy) -> Self {
        let violations = audit_transcript(t, policy);
        let mut counts = BTreeMap::new();
        for v in &violations {
            *counts.entry(format!("{:?}", v.kind)).or_insert(0) += 1;
        }
        Self {
            messages: t.len(),
            violations,
            counts,
            fairness_traffic: fairness_traffic_by_round(t),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}
