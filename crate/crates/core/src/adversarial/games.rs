//! The two discriminator games and gradient assembly on `s`.
//!
//! Contrastive loss over a batch, with `p_j = D^c(a_j, s_j)` and
//! `q_j = D^c(a_j, s_{n(j)})` for the selected negative `n(j)`:
//!
//! ```text
//! L = mean_j −log( e^{p_j} / (e^{p_j} + e^{q_j}) ) = mean_j softplus(q_j − p_j)
//! ```
//!
//! The discriminator descends it; the mapper ascends it. The bias loss is
//! the mean cross-entropy of `D^a(a)` against the sensitive labels.

use crate::models::{BiasDiscriminator, ContrastiveDiscriminator, Mapper};
use crate::nn::{softmax_cross_entropy, Module, MlpTrace, Tensor};
use crate::{Error, Result};

use super::LossWeights;

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    match t.first_non_finite_row() {
        Some(sample) => Err(Error::Numeric {
            what: what.to_string(),
            sample,
        }),
        None => Ok(()),
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward pass of the contrastive loss with everything needed to
/// back-propagate into the discriminator or the protected representation.
#[derive(Debug, Clone)]
pub struct ContrastiveEval {
    pub loss: f64,
    /// ∂L/∂p per sample (`B × 1`).
    pub d_pos: Tensor,
    /// ∂L/∂q per sample (`B × 1`).
    pub d_neg: Tensor,
    protected_width: usize,
    pos: MlpTrace,
    neg: MlpTrace,
}

impl ContrastiveEval {
    /// ∂L/∂a with the discriminator held fixed; `a` enters both scores.
    pub fn protected_grad(&self, disc: &ContrastiveDiscriminator) -> Result<Tensor> {
        let h = self.protected_width;
        let mut g = disc.0.input_grad(&self.pos, &self.d_pos)?.columns(0, h);
        g.add_assign(&disc.0.input_grad(&self.neg, &self.d_neg)?.columns(0, h))?;
        Ok(g)
    }

    /// Accumulates ∂L/∂D^c into the discriminator's gradient buffers.
    pub fn backward_discriminator(&self, disc: &mut ContrastiveDiscriminator) -> Result<()> {
        disc.0.backward(&self.pos, &self.d_pos)?;
        disc.0.backward(&self.neg, &self.d_neg)?;
        Ok(())
    }
}

/// Evaluates the contrastive loss for protected reps `a`, their preimages
/// `s`, and one negative row index per sample.
pub fn contrastive_loss(
    disc: &ContrastiveDiscriminator,
    a: &Tensor,
    s: &Tensor,
    negatives: &[usize],
) -> Result<ContrastiveEval> {
    let b = a.rows();
    if s.rows() != b || negatives.len() != b {
        return Err(Error::dim(
            "contrastive_loss",
            format!("a {} / s {}", a.shape_str(), s.shape_str()),
            format!("{} negatives", negatives.len()),
        ));
    }
    if let Some(&n) = negatives.iter().find(|&&n| n >= b) {
        return Err(Error::Protocol(format!("negative index {n} outside batch of {b}")));
    }
    let (p, pos) = disc.score(a, s)?;
    let (q, neg) = disc.score(a, &s.select_rows(negatives))?;
    check_finite(&p, "contrastive score")?;
    check_finite(&q, "contrastive score")?;
    let n = b as f64;
    let mut loss = 0.0;
    let mut d_pos = Tensor::zeros(b, 1);
    let mut d_neg = Tensor::zeros(b, 1);
    for j in 0..b {
        let margin = q.get(j, 0) - p.get(j, 0);
        loss += softplus(margin);
        let w = sigmoid(margin) / n;
        d_pos.set(j, 0, -w);
        d_neg.set(j, 0, w);
    }
    Ok(ContrastiveEval {
        loss: loss / n,
        d_pos,
        d_neg,
        protected_width: a.cols(),
        pos,
        neg,
    })
}

/// One Adam descent step of `D^c` on the contrastive loss. The
/// representations are inputs only. Returns the pre-step loss.
pub fn contrastive_discriminator_step(
    disc: &mut ContrastiveDiscriminator,
    a: &Tensor,
    s: &Tensor,
    negatives: &[usize],
) -> Result<f64> {
    let eval = contrastive_loss(disc, a, s, negatives)?;
    disc.zero_grad();
    eval.backward_discriminator(disc)?;
    disc.adam_step();
    Ok(eval.loss)
}

/// Contrastive adversarial loss under the frozen discriminator, and the
/// mapper's ascent contribution `−γ ∂L/∂A` accumulated into `mapper`.
///
/// `trace` must be the mapper trace that produced `a`. With `γ = 0`
/// nothing is accumulated.
pub fn contrastive_adversarial_grad(
    disc: &ContrastiveDiscriminator,
    mapper: &mut Mapper,
    trace: &MlpTrace,
    a: &Tensor,
    s: &Tensor,
    negatives: &[usize],
    gamma: f64,
) -> Result<f64> {
    let eval = contrastive_loss(disc, a, s, negatives)?;
    if gamma != 0.0 {
        let da = eval.protected_grad(disc)?;
        mapper.0.backward(trace, &da.scale(-gamma))?;
    }
    Ok(eval.loss)
}

/// Bias discrimination loss, its logit gradient, and the forward trace.
pub fn bias_loss(disc: &BiasDiscriminator, a: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, MlpTrace)> {
    let (logits, trace) = disc.logits(a)?;
    check_finite(&logits, "bias logits")?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
    Ok((loss, dlogits, trace))
}

/// Result of [`bias_discriminator_step`].
#[derive(Debug, Clone)]
pub struct BiasStep {
    /// Loss under the pre-step discriminator.
    pub loss: f64,
    /// ∂L/∂a under the pre-step discriminator; the server back-propagates
    /// it into the mapper as a descent contribution.
    pub protected_grad: Tensor,
}

/// One Adam descent step of `D^a` on the bias loss. Loss and the gradient
/// on `a` come from the same forward pass as the step.
pub fn bias_discriminator_step(disc: &mut BiasDiscriminator, a: &Tensor, labels: &[usize]) -> Result<BiasStep> {
    let (loss, dlogits, trace) = bias_loss(disc, a, labels)?;
    let protected_grad = disc.0.input_grad(&trace, &dlogits)?;
    disc.zero_grad();
    disc.0.backward(&trace, &dlogits)?;
    disc.adam_step();
    Ok(BiasStep { loss, protected_grad })
}

/// Adversarial loss and ∂L/∂a with the discriminator frozen.
pub fn adversarial_grad_on_protected(
    disc: &BiasDiscriminator,
    a: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor)> {
    let (loss, dlogits, trace) = bias_loss(disc, a, labels)?;
    Ok((loss, disc.0.input_grad(&trace, &dlogits)?))
}

/// Adversarial loss and ∂L/∂s through the frozen mapper and discriminator.
pub fn adversarial_grad_on_unified(
    disc: &BiasDiscriminator,
    mapper: &Mapper,
    s: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor)> {
    let (a, trace) = mapper.map(s)?;
    let (loss, da) = adversarial_grad_on_protected(disc, &a, labels)?;
    Ok((loss, mapper.0.input_grad(&trace, &da)?))
}

/// `∂L/∂s = ∂L^t/∂s − Σ_i λ_i ∂L^a_i/∂s`. Terms with `λ_i = 0` are skipped,
/// so all-zero weights return the task gradient bit for bit.
pub fn combine_overall_grad(task: &Tensor, adversarial: &[Tensor], weights: &LossWeights) -> Result<Tensor> {
    if adversarial.len() != weights.len() {
        return Err(Error::Protocol(format!(
            "{} adversarial gradients for {} sensitive features",
            adversarial.len(),
            weights.len()
        )));
    }
    let mut out = task.clone();
    for (g, &lambda) in adversarial.iter().zip(&weights.lambda) {
        if g.shape() != task.shape() {
            return Err(Error::dim("combine_overall_grad", task.shape_str(), g.shape_str()));
        }
        if lambda != 0.0 {
            out.axpy(-lambda, g)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_difference_gradient, AdamConfig, Mlp};
    use crate::rng::stream;

    #[test]
    fn combine_matches_hand_arithmetic() {
        let t = Tensor::from_rows(&[[1.0, 0.0]]);
        let a = Tensor::from_rows(&[[0.5, 0.5]]);
        let w = LossWeights::new(vec![2.0], vec![0.0]).unwrap();
        let g = combine_overall_grad(&t, &[a], &w).unwrap();
        assert_eq!(g.data(), &[0.0, -1.0]);
    }

    #[test]
    fn combine_requires_every_feature() {
        let t = Tensor::zeros(1, 2);
        let err = combine_overall_grad(&t, &[], &LossWeights::adult()).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn zero_discriminator_gives_ln2() {
        let disc = ContrastiveDiscriminator(Mlp::zeros("c", [3, 4, 1], 0.0, AdamConfig::default()));
        let a = Tensor::from_rows(&[[1.0], [2.0], [3.0]]);
        let s = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let eval = contrastive_loss(&disc, &a, &s, &[1, 2, 0]).unwrap();
        assert!((eval.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn contrastive_protected_grad_matches_differences() {
        for seed in 0..20 {
            let mut rng = stream(seed, "t");
            let disc = ContrastiveDiscriminator(
                Mlp::new("c", [2 + 3, 6, 1], 0.0, AdamConfig::default(), &mut rng).unwrap(),
            );
            let a = Tensor::from_vec(4, 2, (0..8).map(|k| ((k * 7 + seed as usize) % 5) as f64 - 2.0).collect())
                .unwrap();
            let s = Tensor::from_vec(4, 3, (0..12).map(|k| ((k * 3 + 1) % 7) as f64 * 0.3 - 1.0).collect()).unwrap();
            let negs = [2, 0, 3, 1];
            let analytic = contrastive_loss(&disc, &a, &s, &negs)
                .unwrap()
                .protected_grad(&disc)
                .unwrap();
            let numeric = finite_difference_gradient(
                |x| {
                    let a = Tensor::from_vec(4, 2, x.to_vec())?;
                    Ok(contrastive_loss(&disc, &a, &s, &negs)?.loss)
                },
                a.data(),
                1e-6,
            )
            .unwrap();
            crate::nn::gradcheck::assert_grad_close(analytic.data(), &numeric);
        }
    }
}
