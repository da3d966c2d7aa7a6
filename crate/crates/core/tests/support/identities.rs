//! Loss identities under frozen players.

use fairvfl_core::adversarial::*;
use fairvfl_core::models::{BiasDiscriminator, ContrastiveDiscriminator, Mapper};
use fairvfl_core::nn::{AdamConfig, Mlp, Module, Tensor};
use fairvfl_core::rng::{stream, StreamRng};
use rand::Rng;

pub fn randn(rows: usize, cols: usize, rng: &mut StreamRng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn mlp(name: &str, dims: [usize; 3], rng: &mut StreamRng) -> Mlp {
    Mlp::new(name, dims, 0.0, AdamConfig::default(), rng).unwrap()
}

pub fn contrastive_adversarial_loss_equals_discriminator_loss_when_frozen() {
    for seed in 0..20 {
        let mut rng = stream(seed, "identity/contrastive");
        let mut disc = ContrastiveDiscriminator(mlp("c", [4 + 8, 16, 1], &mut rng));
        let mut mapper = Mapper(mlp("a", [8, 16, 4], &mut rng));
        let s = randn(12, 8, &mut rng);
        let (a, trace) = mapper.map(&s).unwrap();
        let negatives = select_negatives(&ContrastiveContext { protected: &a, pool: 5 }, &mut rng).unwrap();
        contrastive_discriminator_step(&mut disc, &a, &s, &negatives).unwrap();
        let lp = contrastive_loss(&disc, &a, &s, &negatives).unwrap().loss;
        let lc = contrastive_adversarial_grad(&disc, &mut mapper, &trace, &a, &s, &negatives, 0.25).unwrap();
        assert_eq!(lc.to_bits(), lp.to_bits());
    }
}

pub fn zero_gamma_leaves_the_mapper_untouched() {
    let mut rng = stream(3, "identity/gamma");
    let disc = ContrastiveDiscriminator(mlp("c", [4 + 8, 16, 1], &mut rng));
    let mut mapper = Mapper(mlp("a", [8, 16, 4], &mut rng));
    let s = randn(6, 8, &mut rng);
    let (a, trace) = mapper.map(&s).unwrap();
    mapper.zero_grad();
    contrastive_adversarial_grad(&disc, &mut mapper, &trace, &a, &s, &[1, 2, 3, 4, 5, 0], 0.0).unwrap();
    assert!(mapper.flat_grads().iter().all(|&g| g == 0.0));
}

pub fn adversarial_loss_equals_bias_loss_when_frozen() {
    for seed in 0..20 {
        let mut rng = stream(seed, "identity/bias");
        let mut disc = BiasDiscriminator(mlp("d", [4, 16, 3], &mut rng));
        let mapper = Mapper(mlp("a", [8, 16, 4], &mut rng));
        let s = randn(10, 8, &mut rng);
        let y: Vec<usize> = (0..10).map(|_| rng.gen_range(0..3)).collect();
        let (a, _) = mapper.map(&s).unwrap();
        bias_discriminator_step(&mut disc, &a, &y).unwrap();
        let ld = bias_loss(&disc, &a, &y).unwrap().0;
        let (la, _) = adversarial_grad_on_unified(&disc, &mapper, &s, &y).unwrap();
        assert_eq!(la.to_bits(), ld.to_bits());
    }
}

pub fn uniform_bias_discriminator_gives_no_gradient_on_s() {
    let mut rng = stream(5, "identity/uniform");
    let disc = BiasDiscriminator(Mlp::zeros("d", [4, 8, 2], 0.0, AdamConfig::default()));
    let mapper = Mapper(mlp("a", [8, 16, 4], &mut rng));
    let s = randn(6, 8, &mut rng);
    let (loss, ds) = adversarial_grad_on_unified(&disc, &mapper, &s, &[0, 1, 1, 0, 1, 0]).unwrap();
    assert!((loss - 2f64.ln()).abs() < 1e-15);
    assert!(ds.data().iter().all(|&g| g == 0.0));
}

pub fn zero_lambda_returns_the_task_gradient_bitwise() {
    let mut rng = stream(9, "identity/combine");
    for _ in 0..100 {
        let task = randn(32, 40, &mut rng);
        let adv = vec![randn(32, 40, &mut rng), randn(32, 40, &mut rng)];
        let out = combine_overall_grad(&task, &adv, &LossWeights::zeros(2)).unwrap();
        assert_eq!(out, task);
    }
    let w = LossWeights::new(vec![2.0, 0.5], vec![0.0, 0.0]).unwrap();
    let task = randn(3, 4, &mut rng);
    let adv = vec![randn(3, 4, &mut rng), randn(3, 4, &mut rng)];
    let out = combine_overall_grad(&task, &adv, &w).unwrap();
    for k in 0..12 {
        let want = task.data()[k] - 2.0 * adv[0].data()[k] - 0.5 * adv[1].data()[k];
        assert!((out.data()[k] - want).abs() < 1e-14);
    }
}

pub const ALL: [(&str, fn()); 5] = [
    ("contrastive_adversarial_loss_equals_discriminator_loss_when_frozen", contrastive_adversarial_loss_equals_discriminator_loss_when_frozen),
    ("zero_gamma_leaves_the_mapper_untouched", zero_gamma_leaves_the_mapper_untouched),
    ("adversarial_loss_equals_bias_loss_when_frozen", adversarial_loss_equals_bias_loss_when_frozen),
    ("uniform_bias_discriminator_gives_no_gradient_on_s", uniform_bias_discriminator_gives_no_gradient_on_s),
    ("zero_lambda_returns_the_task_gradient_bitwise", zero_lambda_returns_the_task_gradient_bitwise),
];
