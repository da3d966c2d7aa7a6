//! Plain vertical federated learning composed directly, with no actors,
//! messages or fairness machinery. It consumes the same named random
//! streams as [`Federation`](super::Federation), so a federation with all
//! fairness weights at zero must reproduce it bit for bit.

use crate::data::Shards;
use crate::models::ModelBundle;
use crate::nn::{softmax_cross_entropy, Module};
use crate::rng::{stream, StreamRng};
use crate::Result;

pub struct PlainVflTrainer {
    pub bundle: ModelBundle,
    shards: Shards,
    encoder_dropout: Vec<StreamRng>,
    task_dropout: StreamRng,
}

impl PlainVflTrainer {
    pub fn new(shards: Shards, bundle: ModelBundle, seed: u64) -> Self {
        Self {
            encoder_dropout: (0..shards.insensitive.len())
                .map(|i| stream(seed, &format!("dropout/encoder/{i}")))
                .collect(),
            task_dropout: stream(seed, "dropout/task"),
            shards,
            bundle,
        }
    }

    /// One step of task-loss descent on encoders, aggregator and task head.
    pub fn step(&mut self, ids: &[u64]) -> Result<f64> {
        let mut locals = Vec::new();
        let mut traces = Vec::new();
        for (i, shard) in self.shards.insensitive.iter().enumerate() {
            let batch = shard.batch(ids)?;
            let (l, t) = self.bundle.encoders[i].forward(&batch, Some(&mut self.encoder_dropout[i]))?;
            locals.push(l);
            traces.push(t);
        }
        let (s, agg_trace) = self.bundle.aggregator.forward(&locals)?;
        let labels = self.shards.task.labels(ids)?;
        let (logits, head_trace) = self.bundle.task_head.forward(&s, Some(&mut self.task_dropout))?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
        let head = &mut self.bundle.task_head;
        head.zero_grad();
        let ds = head.0.backward(&head_trace, &dlogits)?;
        head.adam_step();
        let agg = &mut self.bundle.aggregator;
        agg.zero_grad();
        let dlocals = agg.backward(&agg_trace, &ds)?;
        agg.adam_step();
        for ((enc, trace), g) in self.bundle.encoders.iter_mut().zip(&traces).zip(&dlocals) {
            enc.zero_grad();
            enc.backward(trace, g)?;
            enc.adam_step();
        }
        Ok(loss)
    }
}
