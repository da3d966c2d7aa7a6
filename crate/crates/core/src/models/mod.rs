//! Parameterized components: local encoders, the attention aggregator, the
//! task head, per-feature mappers, contrastive and bias discriminators.

mod aggregator;
mod checkpoint;
mod encoder;
mod heads;

use serde::{Deserialize, Serialize};

pub use aggregator::{Aggregator, AggregatorTrace};
pub use checkpoint::Checkpoint;
pub use encoder::{EncoderTrace, LocalEncoder};
pub use heads::{
    discriminate_bias, map_protected, predict_task, score_contrastive, BiasDiscriminator,
    ContrastiveDiscriminator, Mapper, TaskHead,
};

use crate::data::{PlatformBatch, PlatformSchema};
use crate::nn::{AdamConfig, Mlp, Module, ParamBlock, Tensor};
use crate::rng::stream;
use crate::{Error, Result};

/// Representation widths: local/unified, and one protected width per
/// sensitive feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepWidths {
    pub unified: usize,
    pub protected: Vec<usize>,
}

impl Default for RepWidths {
    fn default() -> Self {
        Self {
            unified: 400,
            protected: vec![32, 64],
        }
    }
}

impl RepWidths {
    pub fn validate(&self) -> Result<()> {
        if self.unified == 0 || self.protected.iter().any(|&h| h == 0) {
            return Err(Error::Config(format!("representation widths must be ≥ 1: {self:?}")));
        }
        Ok(())
    }
}

/// Layer sizes of every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub widths: RepWidths,
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub attention_heads: usize,
    pub pool_hidden: usize,
    pub task_hidden: usize,
    pub mapper_hidden: usize,
    pub contrastive_hidden: usize,
    pub bias_hidden: usize,
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            widths: RepWidths::default(),
            embed_dim: 32,
            encoder_hidden: 256,
            attention_heads: 4,
            pool_hidden: 200,
            task_hidden: 128,
            mapper_hidden: 128,
            contrastive_hidden: 128,
            bias_hidden: 64,
            dropout: 0.2,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        self.widths.validate()?;
        let sizes = [
            self.embed_dim,
            self.encoder_hidden,
            self.attention_heads,
            self.pool_hidden,
            self.task_hidden,
            self.mapper_hidden,
            self.contrastive_hidden,
            self.bias_hidden,
        ];
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("all layer sizes must be ≥ 1".into()));
        }
        if self.widths.unified % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "unified width {} not divisible by {} heads",
                self.widths.unified, self.attention_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Every trainable component of one federation.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub arch: Architecture,
    pub encoders: Vec<LocalEncoder>,
    pub aggregator: Aggregator,
    pub task_head: TaskHead,
    pub mappers: Vec<Mapper>,
    pub contrastive: Vec<ContrastiveDiscriminator>,
    pub bias: Vec<BiasDiscriminator>,
}

impl ModelBundle {
    /// Fresh Glorot-initialized bundle; each component draws from its own
    /// seeded stream.
    pub fn new(
        arch: &Architecture,
        schemas: &[PlatformSchema],
        task_classes: usize,
        sensitive_classes: &[usize],
        adam: AdamConfig,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        if schemas.is_empty() {
            return Err(Error::Config("at least one insensitive platform is required".into()));
        }
        if sensitive_classes.len() != arch.widths.protected.len() {
            return Err(Error::Config(format!(
                "{} sensitive features but {} protected widths",
                sensitive_classes.len(),
                arch.widths.protected.len()
            )));
        }
        let d = arch.widths.unified;
        let encoders = schemas
            .iter()
            .enumerate()
            .map(|(i, schema)| {
                let mut rng = stream(seed, &format!("init/encoder/{i}"));
                LocalEncoder::new(
                    &format!("encoder{i}"),
                    schema.clone(),
                    arch.embed_dim,
                    arch.encoder_hidden,
                    d,
                    arch.dropout,
                    adam,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let aggregator = Aggregator::new(
            schemas.len(),
            d,
            arch.attention_heads,
            arch.pool_hidden,
            adam,
            &mut stream(seed, "init/aggregator"),
        )?;
        let task_head = TaskHead(Mlp::new(
            "task",
            [d, arch.task_hidden, task_classes],
            arch.dropout,
            adam,
            &mut stream(seed, "init/task"),
        )?);
        let mut mappers = Vec::new();
        let mut contrastive = Vec::new();
        let mut bias = Vec::new();
        for (i, (&h, &classes)) in arch.widths.protected.iter().zip(sensitive_classes).enumerate() {
            let mut rng = stream(seed, &format!("init/sensitive/{i}"));
            mappers.push(Mapper(Mlp::new(
                &format!("mapper{i}"),
                [d, arch.mapper_hidden, h],
                0.0,
                adam,
                &mut rng,
            )?));
            contrastive.push(ContrastiveDiscriminator(Mlp::new(
                &format!("contrastive{i}"),
                [h + d, arch.contrastive_hidden, 1],
                0.0,
                adam,
                &mut rng,
            )?));
            bias.push(BiasDiscriminator(Mlp::new(
                &format!("bias{i}"),
                [h, arch.bias_hidden, classes],
                0.0,
                adam,
                &mut rng,
            )?));
        }
        Ok(Self {
            arch: arch.clone(),
            encoders,
            aggregator,
            task_head,
            mappers,
            contrastive,
            bias,
        })
    }

    pub fn widths(&self) -> &RepWidths {
        &self.arch.widths
    }

    /// Unified representations in eval mode.
    pub fn unified(&self, batches: &[PlatformBatch]) -> Result<Tensor> {
        if batches.len() != self.encoders.len() {
            return Err(Error::Protocol(format!(
                "{} platform batches for {} encoders",
                batches.len(),
                self.encoders.len()
            )));
        }
        let local = self
            .encoders
            .iter()
            .zip(batches)
            .map(|(e, b)| Ok(e.forward(b, None)?.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.aggregator.forward(&local)?.0)
    }

    /// Task class distribution in eval mode.
    pub fn predict(&self, batches: &[PlatformBatch]) -> Result<Tensor> {
        self.task_head.predict(&self.unified(batches)?)
    }

    /// Checkpoint image of all parameters.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self)
    }

    /// Overwrites parameters from a checkpoint with identical block layout.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.restore(self)
    }
}

impl Module for ModelBundle {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.encoders.iter().for_each(|e| e.visit(f));
        self.aggregator.visit(f);
        self.task_head.visit(f);
        self.mappers.iter().for_each(|m| m.visit(f));
        self.contrastive.iter().for_each(|m| m.visit(f));
        self.bias.iter().for_each(|m| m.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.encoders.iter_mut().for_each(|e| e.visit_mut(f));
        self.aggregator.visit_mut(f);
        self.task_head.visit_mut(f);
        self.mappers.iter_mut().for_each(|m| m.visit_mut(f));
        self.contrastive.iter_mut().for_each(|m| m.visit_mut(f));
        self.bias.iter_mut().for_each(|m| m.visit_mut(f));
    }
}
