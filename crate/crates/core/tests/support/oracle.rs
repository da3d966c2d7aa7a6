//! Backward passes against central finite differences, 20 seeds each.

use fairvfl_core::adversarial::{
    adversarial_grad_on_protected, adversarial_grad_on_unified, bias_loss, contrastive_adversarial_grad,
    contrastive_loss,
};
use fairvfl_core::data::{FieldKind, FieldSpec, PlatformBatch, PlatformSchema};
use fairvfl_core::models::{Aggregator, BiasDiscriminator, ContrastiveDiscriminator, LocalEncoder, Mapper, TaskHead};
use fairvfl_core::nn::{finite_difference_gradient, max_grad_error, softmax_cross_entropy, AdamConfig, Mlp, Module, Tensor};
use fairvfl_core::rng::{stream, StreamRng};
use rand::Rng;

const SEEDS: u64 = 20;
const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn randn(rows: usize, cols: usize, rng: &mut StreamRng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn labels(n: usize, classes: usize, rng: &mut StreamRng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..classes)).collect()
}

/// Scalar read-out `Σ w ⊙ y` so any tensor output has a gradient `w`.
fn readout(y: &Tensor, w: &Tensor) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn check(what: &str, seed: u64, analytic: &[f64], numeric: &[f64]) {
    let err = max_grad_error(analytic, numeric);
    assert!(err < TOL, "{what}, seed {seed}: relative error {err:e}");
}

/// Gradient of `f` with respect to the module's parameters by differences.
fn param_fd<M: Module + Clone>(module: &M, f: impl Fn(&M) -> f64) -> Vec<f64> {
    let mut probe = module.clone();
    finite_difference_gradient(
        |p| {
            probe.set_flat_params(p);
            Ok(f(&probe))
        },
        &module.flat_params(),
        H,
    )
    .unwrap()
}

fn tensor_fd(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let (r, c) = x.shape();
    finite_difference_gradient(|v| Ok(f(&Tensor::from_vec(r, c, v.to_vec()).unwrap())), x.data(), H).unwrap()
}

/// Moves every parameter off its initial value; zero-initialized biases can
/// otherwise leave pre-activations exactly on the ReLU kink.
fn jitter<M: Module>(m: &mut M, rng: &mut StreamRng) {
    let p: Vec<f64> = m.flat_params().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
    m.set_flat_params(&p);
}

fn mlp(name: &str, dims: [usize; 3], rng: &mut StreamRng) -> Mlp {
    let mut m = Mlp::new(name, dims, 0.0, AdamConfig::default(), rng).unwrap();
    jitter(&mut m, rng);
    m
}

pub fn mlp_parameters_and_inputs() {
    for seed in 0..SEEDS {
        let mut rng = stream(seed, "oracle/mlp");
        let mut net = mlp("m", [5, 7, 3], &mut rng);
        let x = randn(4, 5, &mut rng);
        let w = randn(4, 3, &mut rng);
        let (_, trace) = net.forward(&x, None).unwrap();
        net.zero_grad();
        let dx = net.backward(&trace, &w).unwrap();
        check("mlp params", seed, &net.flat_grads(), &param_fd(&net, |m| readout(&m.infer(&x).unwrap(), &w)));
        check("mlp input", seed, dx.data(), &tensor_fd(&x, |x| readout(&net.infer(x).unwrap(), &w)));
    }
}

fn schema() -> PlatformSchema {
    let cat = |name: &str, k: usize| FieldSpec {
        name: name.into(),
        kind: FieldKind::Categorical {
            vocab: (0..k).map(|v| format!("v{v}")).collect(),
        },
    };
    PlatformSchema {
        fields: vec![
            cat("a", 4),
            FieldSpec {
                name: "x".into(),
                kind: FieldKind::Numeric,
            },
            cat("b", 3),
            FieldSpec {
                name: "y".into(),
                kind: FieldKind::Numeric,
            },
        ],
    }
}

pub fn encoder_embeddings_and_layers() {
    for seed in 0..SEEDS {
        let mut rng = stream(seed, "oracle/encoder");
        let mut enc = LocalEncoder::new("e", schema(), 3, 6, 4, 0.2, AdamConfig::default(), &mut rng).unwrap();
        jitter(&mut enc, &mut rng);
        let batch = PlatformBatch {
            categorical: vec![
                (0..5).map(|_| rng.gen_range(0..4)).collect(),
                (0..5).map(|_| rng.gen_range(0..3)).collect(),
            ],
            numeric: randn(5, 2, &mut rng),
        };
        let w = randn(5, 4, &mut rng);
        let (_, trace) = enc.forward(&batch, None).unwrap();
        enc.zero_grad();
        enc.backward(&trace, &w).unwrap();
        let numeric = param_fd(&enc, |e| readout(&e.forward(&batch, None).unwrap().0, &w));
        check("encoder params", seed, &enc.flat_grads(), &numeric);
    }
}

pub fn aggregator_attention_and_pooling() {
    for seed in 0..SEEDS {
        let mut rng = stream(seed, "oracle/aggregator");
        let n = 1 + (seed as usize % 3);
        let mut agg = Aggregator::new(n, 8, 2, 5, AdamConfig::default(), &mut rng).unwrap();
        jitter(&mut agg, &mut rng);
        let local: Vec<Tensor> = (0..n).map(|_| randn(3, 8, &mut rng)).collect();
        let w = randn(3, 8, &mut rng);
        let (_, trace) = agg.forward(&local).unwrap();
        agg.zero_grad();
        let dlocal = agg.backward(&trace, &w).unwrap();
        let numeric = param_fd(&agg, |a| readout(&a.forward(&local).unwrap().0, &w));
        check("aggregator params", seed, &agg.flat_grads(), &numeric);
        for i in 0..n {
            let numeric = tensor_fd(&local[i], |x| {
                let mut l = local.clone();
                l[i] = x.clone();
                readout(&agg.forward(&l).unwrap().0, &w)
            });
            check("aggregator input", seed, dlocal[i].data(), &numeric);
        }
    }
}

pub fn task_cross_entropy() {
    for seed in 0..SEEDS {
        let mut rng = stream(seed, "oracle/task");
        let mut head = TaskHead(mlp("t", [6, 5, 2], &mut rng));
        let s = randn(4, 6, &mut rng);
        let y = labels(4, 2, &mut rng);
        let loss = |h: &TaskHead, s: &Tensor| softmax_cross_entropy(&h.0.infer(s).unwrap(), &y).unwrap().0;
        let (logits, trace) = head.forward(&s, None).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&logits, &y).unwrap();
        head.zero_grad();
        let ds = head.0.backward(&trace, &dlogits).unwrap();
        check("task params", seed, &head.flat_grads(), &param_fd(&head, |h| loss(h, &s)));
        check("task input", seed, ds.data(), &tensor_fd(&s, |s| loss(&head, s)));
    }
}

struct ContrastiveCase {
    disc: ContrastiveDiscriminator,
    mapper: Mapper,
    s: Tensor,
    negatives: Vec<usize>,
}

fn contrastive_case(seed: u64) -> ContrastiveCase {
    let mut rng = stream(seed, "oracle/contrastive");
    let b = 5;
    ContrastiveCase {
        disc: ContrastiveDiscriminator(mlp("c", [3 + 6, 7, 1], &mut rng)),
        mapper: Mapper(mlp("a", [6, 5, 3], &mut rng)),
        s: randn(b, 6, &mut rng),
        negatives: (0..b).map(|j| (j + 1 + rng.gen_range(0..b - 1)) % b).collect(),
    }
}

pub fn contrastive_discriminator_and_protected() {
    for seed in 0..SEEDS {
        let mut c = contrastive_case(seed);
        let (a, _) = c.mapper.map(&c.s).unwrap();
        let eval = contrastive_loss(&c.disc, &a, &c.s, &c.negatives).unwrap();
        let da = eval.protected_grad(&c.disc).unwrap();
        c.disc.zero_grad();
        eval.backward_discriminator(&mut c.disc).unwrap();
        let (s, negs) = (&c.s, &c.negatives);
        let numeric = param_fd(&c.disc, |d| contrastive_loss(d, &a, s, negs).unwrap().loss);
        check("contrastive disc params", seed, &c.disc.flat_grads(), &numeric);
        let numeric = tensor_fd(&a, |a| contrastive_loss(&c.disc, a, s, negs).unwrap().loss);
        check("contrastive protected", seed, da.data(), &numeric);
    }
}

pub fn contrastive_ascent_on_mapper() {
    let gamma = 0.25;
    for seed in 0..SEEDS {
        let mut c = contrastive_case(seed);
        let (a, trace) = c.mapper.map(&c.s).unwrap();
        c.mapper.zero_grad();
        contrastive_adversarial_grad(&c.disc, &mut c.mapper, &trace, &a, &c.s, &c.negatives, gamma).unwrap();
        // The accumulated gradient is the descent direction of −γ·L^c.
        let (s, negs, disc) = (&c.s, &c.negatives, &c.disc);
        let numeric = param_fd(&c.mapper, |m| -gamma * contrastive_loss(disc, &m.map(s).unwrap().0, s, negs).unwrap().loss);
        check("contrastive mapper ascent", seed, &c.mapper.flat_grads(), &numeric);
    }
}

pub fn bias_discriminator_and_adversarial() {
    for seed in 0..SEEDS {
        let mut rng = stream(seed, "oracle/bias");
        let classes = 2 + (seed as usize % 4);
        let mut disc = BiasDiscriminator(mlp("d", [3, 6, classes], &mut rng));
        let mapper = Mapper(mlp("a", [6, 5, 3], &mut rng));
        let s = randn(6, 6, &mut rng);
        let y = labels(6, classes, &mut rng);
        let (a, _) = mapper.map(&s).unwrap();

        let (_, dlogits, trace) = bias_loss(&disc, &a, &y).unwrap();
        disc.zero_grad();
        disc.0.backward(&trace, &dlogits).unwrap();
        let numeric = param_fd(&disc, |d| bias_loss(d, &a, &y).unwrap().0);
        check("bias disc params", seed, &disc.flat_grads(), &numeric);

        let (_, da) = adversarial_grad_on_protected(&disc, &a, &y).unwrap();
        check("bias protected", seed, da.data(), &tensor_fd(&a, |a| bias_loss(&disc, a, &y).unwrap().0));

        let (_, ds) = adversarial_grad_on_unified(&disc, &mapper, &s, &y).unwrap();
        let numeric = tensor_fd(&s, |s| bias_loss(&disc, &mapper.map(s).unwrap().0, &y).unwrap().0);
        check("adversarial unified", seed, ds.data(), &numeric);
    }
}


/// Every block, in forward order.
pub const ALL: [(&str, fn()); 7] = [
    ("mlp", mlp_parameters_and_inputs),
    ("encoder", encoder_embeddings_and_layers),
    ("aggregator", aggregator_attention_and_pooling),
    ("task head", task_cross_entropy),
    ("contrastive", contrastive_discriminator_and_protected),
    ("contrastive ascent", contrastive_ascent_on_mapper),
    ("bias", bias_discriminator_and_adversarial),
];
