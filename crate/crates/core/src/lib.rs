//! Deterministic simulator for fair vertical federated learning.
//!
//! Fairness-insensitive platforms encode their feature slices into local
//! representations, a server aggregates them into a unified representation,
//! a task platform trains the prediction head, and sensitive-label platforms
//! drive adversarial debiasing through protected representations produced by
//! per-feature mappers. A contrastive adversarial game strips information
//! unrelated to the sensitive feature from each protected representation
//! before it leaves the server.
//!
//! Module map:
//!
//! - [`nn`]: dense layers, losses, Adam, dropout and a finite-difference oracle.
//! - [`models`]: encoders, the attention aggregator, heads, mappers and discriminators.
//! - [`adversarial`]: negative sampling, both discriminator games and gradient assembly.
//! - [`protocol`]: platform actors, messages, transcripts, LDP and the auditor.
//! - [`data`]: ADULT ingestion, vertical partitioning, synthetic data and batching.
//! - [`eval`]: attacker ensembles, privacy probes and task metrics.
//! - [`experiment`]: configuration, presets, training/attack runs and sweeps.

pub mod adversarial;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod models;
pub mod nn;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
