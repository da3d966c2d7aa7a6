//! Task head, mappers and discriminators. All are two-layer perceptrons;
//! only the task head uses dropout, so every fairness-path component is a
//! deterministic function of its inputs.

use crate::nn::{softmax, Mlp, MlpTrace, Module, ParamBlock, Tensor};
use crate::rng::StreamRng;
use crate::{Error, Result};

macro_rules! mlp_newtype {
    ($name:ident) => {
        impl Module for $name {
            fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
                self.0.visit(f);
            }
            fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
                self.0.visit_mut(f);
            }
        }
    };
}

/// `M^t` on the task platform.
#[derive(Debug, Clone)]
pub struct TaskHead(pub Mlp);
mlp_newtype!(TaskHead);

impl TaskHead {
    pub fn forward(&self, s: &Tensor, rng: Option<&mut StreamRng>) -> Result<(Tensor, MlpTrace)> {
        self.0.forward(s, rng)
    }

    /// Class distribution in eval mode.
    pub fn predict(&self, s: &Tensor) -> Result<Tensor> {
        Ok(softmax(&self.0.infer(s)?))
    }
}

/// `A_i` on the server: unified representation → protected representation.
#[derive(Debug, Clone)]
pub struct Mapper(pub Mlp);
mlp_newtype!(Mapper);

impl Mapper {
    pub fn map(&self, s: &Tensor) -> Result<(Tensor, MlpTrace)> {
        self.0.forward(s, None)
    }

    pub fn width(&self) -> usize {
        self.0.out_width()
    }
}

/// `D^c_i` on the server: scores whether a unified representation is the
/// preimage of a protected representation.
#[derive(Debug, Clone)]
pub struct ContrastiveDiscriminator(pub Mlp);
mlp_newtype!(ContrastiveDiscriminator);

impl ContrastiveDiscriminator {
    /// One score per row of `[a | s]`.
    pub fn score(&self, a: &Tensor, s: &Tensor) -> Result<(Tensor, MlpTrace)> {
        let x = Tensor::hcat(&[a, s])?;
        self.0.forward(&x, None)
    }
}

/// `D^a_i` on the sensitive platform.
#[derive(Debug, Clone)]
pub struct BiasDiscriminator(pub Mlp);
mlp_newtype!(BiasDiscriminator);

impl BiasDiscriminator {
    pub fn logits(&self, a: &Tensor) -> Result<(Tensor, MlpTrace)> {
        self.0.forward(a, None)
    }

    pub fn classes(&self) -> usize {
        self.0.out_width()
    }
}

/// `ŷ = softmax(M^t(s))`, eval mode.
pub fn predict_task(s: &Tensor, head: &TaskHead) -> Result<Tensor> {
    head.predict(s)
}

/// `a_i = A_i(s)`.
pub fn map_protected(s: &Tensor, i: usize, mappers: &[Mapper]) -> Result<Tensor> {
    let mapper = mappers.get(i).ok_or_else(|| {
        Error::Config(format!("sensitive feature index {i} out of range (m = {})", mappers.len()))
    })?;
    Ok(mapper.map(s)?.0)
}

/// `D^c_i(a_i, s)` per sample.
pub fn score_contrastive(a: &Tensor, s: &Tensor, disc: &ContrastiveDiscriminator) -> Result<Vec<f64>> {
    Ok(disc.score(a, s)?.0.into_vec())
}

/// `softmax(D^a_i(a_i))`.
pub fn discriminate_bias(a: &Tensor, disc: &BiasDiscriminator) -> Result<Tensor> {
    Ok(softmax(&disc.logits(a)?.0))
}
