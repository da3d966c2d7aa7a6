//! The simulated federation: platform roles, typed messages on a
//! deterministic mailbox, the training round and serving flow, local
//! differential privacy, transcripts, the privacy-boundary auditor and
//! communication accounting.

mod audit;
mod federation;
mod ldp;
mod network;
mod reference;
mod roles;
mod transcript;

pub use audit::{
    audit_transcript, classify, expected_fairness_traffic, fairness_comm_cost, fairness_traffic_by_round, traffic_check, AuditPolicy, RoundTraffic,
    AuditReport, Violation, ViolationKind,
};
pub use federation::{Federation, FederationConfig, Representations, RoundLosses, RoundReport};
pub use ldp::{clip_and_noise, laplace, ldp_perturb, GradientDpConfig, LdpConfig};
pub use network::Network;
pub use reference::PlainVflTrainer;
pub use roles::{edge_allowed, PayloadKind, Role};
pub use transcript::{Message, Payload, Transcript, TranscriptRecord};
