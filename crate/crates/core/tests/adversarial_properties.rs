//! Loss identities under frozen players, negative sampling, and the
//! separation between the contrastive game and the shared trunk.

mod support;

use fairvfl_core::adversarial::*;
use fairvfl_core::data::{partition_vertical, Split, SyntheticSpec};
use fairvfl_core::experiment::{load_dataset, prepare, ExperimentConfig};
use fairvfl_core::models::ContrastiveDiscriminator;
use fairvfl_core::nn::{AdamConfig, Mlp, Module};
use fairvfl_core::protocol::PlainVflTrainer;
use fairvfl_core::rng::stream;
use support::identities::{self, randn};
use support::negatives;

#[test]
fn contrastive_adversarial_loss_equals_discriminator_loss_when_frozen() {
    identities::contrastive_adversarial_loss_equals_discriminator_loss_when_frozen();
}

#[test]
fn zero_gamma_leaves_the_mapper_untouched() {
    identities::zero_gamma_leaves_the_mapper_untouched();
}

#[test]
fn adversarial_loss_equals_bias_loss_when_frozen() {
    identities::adversarial_loss_equals_bias_loss_when_frozen();
}

#[test]
fn uniform_bias_discriminator_gives_no_gradient_on_s() {
    identities::uniform_bias_discriminator_gives_no_gradient_on_s();
}

#[test]
fn zero_lambda_returns_the_task_gradient_bitwise() {
    identities::zero_lambda_returns_the_task_gradient_bitwise();
}

#[test]
fn negatives_come_from_the_brute_force_top_pool() {
    negatives::negatives_come_from_the_brute_force_top_pool();
}

#[test]
fn pool_of_five_in_a_batch_of_32() {
    let mut rng = stream(2, "negatives/pool");
    let a = randn(32, 8, &mut rng);
    for q in 0..32 {
        assert_eq!(relevance_pool(&a, q, 5).unwrap().len(), 5);
    }
}

#[test]
fn contrastive_discriminator_learns_a_separable_fixture() {
    let mut rng = stream(4, "contrastive/separable");
    // Each a is the first half of its preimage, so the true pair always
    // matches and a shuffled one rarely does.
    let s = randn(16, 6, &mut rng);
    let a = s.columns(0, 3);
    let negatives: Vec<usize> = (0..16).map(|j| (j + 5) % 16).collect();
    let mut disc = ContrastiveDiscriminator(Mlp::new(
        "c",
        [3 + 6, 32, 1],
        0.0,
        AdamConfig { lr: 1e-2, ..AdamConfig::default() },
        &mut rng,
    )
    .unwrap());
    let first = contrastive_discriminator_step(&mut disc, &a, &s, &negatives).unwrap();
    for _ in 0..199 {
        contrastive_discriminator_step(&mut disc, &a, &s, &negatives).unwrap();
    }
    let last = contrastive_loss(&disc, &a, &s, &negatives).unwrap().loss;
    assert!(last < 0.1, "loss {first} → {last}");
}

#[test]
fn contrastive_game_never_reaches_the_trunk() {
    // With λ = 0 the only fairness term left is γ, which must stop at the
    // mappers: the trunk then trains exactly like plain VFL.
    let mut cfg = ExperimentConfig::synthetic_smoke();
    let m = cfg.weights.len();
    cfg.weights = LossWeights::new(vec![0.0; m], vec![1.0; m]).unwrap();
    let mut p = prepare(&cfg).unwrap();
    let shards = partition_vertical(&load_dataset(&cfg).unwrap(), &SyntheticSpec::default().assignment()).unwrap();
    let mut plain = PlainVflTrainer::new(shards, p.federation.bundle().clone(), cfg.seed);
    let ids = p.dataset.ids_of(Split::Train);
    let mappers_before: Vec<Vec<f64>> = p.federation.bundle().mappers.iter().map(|m| m.flat_params()).collect();
    for chunk in ids.chunks(cfg.batch_size).take(20) {
        p.federation.run_training_round(chunk, &cfg.weights).unwrap();
        plain.step(chunk).unwrap();
    }
    let fed = p.federation.bundle();
    for (a, b) in fed.encoders.iter().zip(&plain.bundle.encoders) {
        assert_eq!(a.flat_params(), b.flat_params());
    }
    assert_eq!(fed.aggregator.flat_params(), plain.bundle.aggregator.flat_params());
    let mappers_after: Vec<Vec<f64>> = fed.mappers.iter().map(|m| m.flat_params()).collect();
    assert_ne!(mappers_before, mappers_after);
}
