//! The simulated federation and its training round.
//!
//! Each platform owns only its role's data: insensitive platforms hold a
//! feature shard, sensitive platforms a label column, the task platform the
//! task labels. Model components live in one [`ModelBundle`] so they can be
//! checkpointed together, but each step below touches only the components
//! of the acting platform.

use serde::{Deserialize, Serialize};

use super::ldp::{clip_and_noise, ldp_perturb, GradientDpConfig, LdpConfig};
use super::{Network, Payload, PayloadKind, Role, Transcript};
use crate::adversarial::{
    adversarial_grad_on_protected, bias_loss, combine_overall_grad, contrastive_loss, select_negatives, BlockGroup,
    ContrastiveContext, LedgerCheck, LossTerm, LossWeights, SignLedger,
};
use crate::data::{FeatureShard, PlatformBatch, SensitiveShard, Shards, TaskShard};
use crate::models::ModelBundle;
use crate::nn::{softmax_cross_entropy, Module, Tensor};
use crate::rng::{stream, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    /// Size of the top-relevance pool negatives are drawn from.
    pub negative_pool: usize,
    pub ldp: LdpConfig,
    pub gradient_dp: GradientDpConfig,
    /// Verify every update against the sign ledger (slow; for tests).
    pub instrumented: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            negative_pool: 5,
            ldp: LdpConfig::default(),
            gradient_dp: GradientDpConfig::default(),
            instrumented: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negative_pool == 0 {
            return Err(Error::Config("negative pool size must be ≥ 1".into()));
        }
        self.ldp.validate()?;
        self.gradient_dp.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundLosses {
    pub task: f64,
    pub contrastive_disc: Vec<f64>,
    pub contrastive_adv: Vec<f64>,
    pub bias_disc: Vec<f64>,
    pub adversarial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: u64,
    pub losses: RoundLosses,
    /// Populated only in instrumented mode.
    pub ledger: Vec<LedgerCheck>,
}

#[derive(Debug, Clone)]
struct TaskPlatform {
    shard: TaskShard,
    dropout: StreamRng,
}

#[derive(Debug, Clone)]
struct InsensitivePlatform {
    shard: FeatureShard,
    dropout: StreamRng,
}

#[derive(Debug, Clone)]
struct SensitivePlatform {
    shard: SensitiveShard,
}

#[derive(Debug, Clone)]
struct ServerState {
    negatives: StreamRng,
    ldp: StreamRng,
}

/// Unified and protected representations in eval mode.
#[derive(Debug, Clone)]
pub struct Representations {
    pub unified: Tensor,
    pub protected: Vec<Tensor>,
}

pub struct Federation {
    bundle: ModelBundle,
    config: FederationConfig,
    task: TaskPlatform,
    insensitive: Vec<InsensitivePlatform>,
    sensitive: Vec<SensitivePlatform>,
    server: ServerState,
    gradient_noise: StreamRng,
    ledger: SignLedger,
    net: Network,
    round: u64,
}

fn finite(t: &Tensor, what: &str) -> Result<()> {
    match t.first_non_finite_row() {
        Some(sample) => Err(Error::Numeric {
            what: what.into(),
            sample,
        }),
        None => Ok(()),
    }
}

fn finite_loss(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric {
            what: what.into(),
            sample: 0,
        })
    }
}

/// Gradient of a single term on a scratch copy of `module`.
fn term_grads<M: Module + Clone>(module: &M, f: impl FnOnce(&mut M) -> Result<()>) -> Result<Vec<f64>> {
    let mut scratch = module.clone();
    scratch.zero_grad();
    f(&mut scratch)?;
    Ok(scratch.flat_grads())
}

impl Federation {
    pub fn new(shards: Shards, bundle: ModelBundle, config: FederationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if shards.insensitive.len() != bundle.encoders.len() {
            return Err(Error::Config(format!(
                "{} insensitive shards for {} encoders",
                shards.insensitive.len(),
                bundle.encoders.len()
            )));
        }
        let classes = shards.sensitive_classes();
        let disc_classes: Vec<usize> = bundle.bias.iter().map(|d| d.classes()).collect();
        if classes != disc_classes {
            return Err(Error::Config(format!(
                "sensitive classes {classes:?} do not match bias discriminators {disc_classes:?}"
            )));
        }
        for (shard, enc) in shards.insensitive.iter().zip(&bundle.encoders) {
            if shard.schema != enc.schema {
                return Err(Error::Config(format!("{} schema does not match its encoder", shard.label())));
            }
        }
        let n = shards.insensitive.len();
        let m = shards.sensitive.len();
        Ok(Self {
            task: TaskPlatform {
                shard: shards.task,
                dropout: stream(seed, "dropout/task"),
            },
            insensitive: shards
                .insensitive
                .into_iter()
                .enumerate()
                .map(|(i, shard)| InsensitivePlatform {
                    shard,
                    dropout: stream(seed, &format!("dropout/encoder/{i}")),
                })
                .collect(),
            sensitive: shards.sensitive.into_iter().map(|shard| SensitivePlatform { shard }).collect(),
            server: ServerState {
                negatives: stream(seed, "negatives"),
                ldp: stream(seed, "ldp"),
            },
            gradient_noise: stream(seed, "gradient-dp"),
            ledger: SignLedger::new(n, m),
            net: Network::new(),
            bundle,
            config,
            round: 0,
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn bundle_mut(&mut self) -> &mut ModelBundle {
        &mut self.bundle
    }

    pub fn into_bundle(self) -> ModelBundle {
        self.bundle
    }

    pub fn config(&self) -> &FederationConfig {
        &self.config
    }

    pub fn set_instrumented(&mut self, on: bool) {
        self.config.instrumented = on;
    }

    pub fn ledger(&self) -> &SignLedger {
        &self.ledger
    }

    /// Rounds completed so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn transcript(&self) -> &Transcript {
        self.net.transcript()
    }

    pub fn take_transcript(&mut self) -> Transcript {
        self.net.take_transcript()
    }

    pub fn insensitive_count(&self) -> usize {
        self.insensitive.len()
    }

    pub fn sensitive_count(&self) -> usize {
        self.sensitive.len()
    }

    /// Each platform's feature slice for `ids`, in platform order.
    pub fn platform_batches(&self, ids: &[u64]) -> Result<Vec<PlatformBatch>> {
        self.insensitive.iter().map(|p| p.shard.batch(ids)).collect()
    }

    pub fn feature_shard(&self, i: usize) -> Option<&FeatureShard> {
        self.insensitive.get(i).map(|p| &p.shard)
    }

    pub fn task_labels(&self, ids: &[u64]) -> Result<Vec<usize>> {
        self.task.shard.labels(ids)
    }

    pub fn sensitive_labels(&self, i: usize, ids: &[u64]) -> Result<Vec<usize>> {
        self.sensitive
            .get(i)
            .ok_or_else(|| Error::Config(format!("no sensitive platform {i}")))?
            .shard
            .labels(ids)
    }

    fn gradient_payload(&mut self, g: Tensor) -> Result<Payload> {
        let dp = self.config.gradient_dp;
        Ok(Payload::Tensor(if dp.enabled {
            clip_and_noise(&g, dp.clip, dp.epsilon, &mut self.gradient_noise)?
        } else {
            g
        }))
    }

    fn check(
        &self,
        checks: &mut Vec<LedgerCheck>,
        block: BlockGroup,
        applied: Vec<f64>,
        terms: Vec<(LossTerm, f64, Vec<f64>)>,
    ) -> Result<()> {
        let c = self.ledger.verify(block, &applied, &terms)?;
        checks.push(c);
        Ok(())
    }

    /// One federated training round on the batch `ids`.
    pub fn run_training_round(&mut self, ids: &[u64], weights: &LossWeights) -> Result<RoundReport> {
        use PayloadKind as K;
        weights.validate()?;
        let n = self.insensitive.len();
        let m = self.sensitive.len();
        if weights.len() != m {
            return Err(Error::Config(format!("{} loss weights for {m} sensitive features", weights.len())));
        }
        if ids.len() < 2 {
            return Err(Error::Protocol("contrastive learning requires ≥2 samples".into()));
        }
        let instrumented = self.config.instrumented;
        let round = self.round;
        self.net.begin_round(round)?;
        let mut checks = Vec::new();
        let mut losses = RoundLosses::default();

        // The task platform distributes the batch ids.
        for i in 0..n {
            self.net.send(Role::Task, Role::Insensitive(i), K::SampleIds, Payload::Ids(ids.to_vec()), false)?;
        }
        for i in 0..m {
            self.net.send(Role::Task, Role::Sensitive(i), K::SampleIds, Payload::Ids(ids.to_vec()), false)?;
        }

        // Local representations.
        let mut enc_traces = Vec::with_capacity(n);
        for i in 0..n {
            let me = Role::Insensitive(i);
            let batch_ids = self.net.recv(me, Role::Task, K::SampleIds)?.payload.into_ids()?;
            let p = &mut self.insensitive[i];
            let batch = p.shard.batch(&batch_ids)?;
            let (local, trace) = self.bundle.encoders[i].forward(&batch, Some(&mut p.dropout))?;
            finite(&local, "local representation")?;
            self.net.send(me, Role::Server, K::LocalRepUpload, Payload::Tensor(local), false)?;
            enc_traces.push(trace);
        }

        // Aggregation and the task platform's step.
        let locals = (0..n)
            .map(|i| self.net.recv(Role::Server, Role::Insensitive(i), K::LocalRepUpload)?.payload.into_tensor())
            .collect::<Result<Vec<_>>>()?;
        let (s, agg_trace) = self.bundle.aggregator.forward(&locals)?;
        finite(&s, "unified representation")?;
        let perturb = self.config.ldp.perturbs_training();
        let upload = if perturb {
            ldp_perturb(&s, &self.config.ldp, &mut self.server.ldp)?
        } else {
            s.clone()
        };
        self.net.send(Role::Server, Role::Task, K::UnifiedRepToTask, Payload::Tensor(upload), perturb)?;

        let s_task = self.net.recv(Role::Task, Role::Server, K::UnifiedRepToTask)?.payload.into_tensor()?;
        let labels = self.task.shard.labels(ids)?;
        let head = &mut self.bundle.task_head;
        let (logits, head_trace) = head.forward(&s_task, Some(&mut self.task.dropout))?;
        finite(&logits, "task logits")?;
        let (task_loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
        losses.task = finite_loss(task_loss, "task loss")?;
        head.zero_grad();
        let ds_task = head.0.backward(&head_trace, &dlogits)?;
        if instrumented {
            let applied = self.bundle.task_head.flat_grads();
            let g = term_grads(&self.bundle.task_head, |h| h.0.backward(&head_trace, &dlogits).map(drop))?;
            self.check(&mut checks, BlockGroup::TaskHead, applied, vec![(LossTerm::Task, 1.0, g)])?;
        }
        self.bundle.task_head.adam_step();
        let payload = self.gradient_payload(ds_task)?;
        self.net.send(Role::Task, Role::Server, K::TaskGradDown, payload, false)?;
        let ds_task = self.net.recv(Role::Server, Role::Task, K::TaskGradDown)?.payload.into_tensor()?;

        // Fairness machinery, one sensitive feature at a time.
        let mut adv_grads = Vec::with_capacity(m);
        for i in 0..m {
            let gamma = weights.gamma[i];
            let peer = Role::Sensitive(i);

            let (a, map_trace) = self.bundle.mappers[i].map(&s)?;
            finite(&a, "protected representation")?;
            let ctx = ContrastiveContext {
                protected: &a,
                pool: self.config.negative_pool,
            };
            let negatives = select_negatives(&ctx, &mut self.server.negatives)?;

            // Contrastive discriminator: one descent step.
            let eval = contrastive_loss(&self.bundle.contrastive[i], &a, &s, &negatives)?;
            losses.contrastive_disc.push(finite_loss(eval.loss, "contrastive discrimination loss")?);
            let disc = &mut self.bundle.contrastive[i];
            disc.zero_grad();
            eval.backward_discriminator(disc)?;
            if instrumented {
                let applied = self.bundle.contrastive[i].flat_grads();
                let g = term_grads(&self.bundle.contrastive[i], |d| {
                    contrastive_loss(d, &a, &s, &negatives)?.backward_discriminator(d)
                })?;
                self.check(&mut checks, BlockGroup::Contrastive(i), applied, vec![(LossTerm::ContrastiveDisc(i), 1.0, g)])?;
            }
            self.bundle.contrastive[i].adam_step();

            // Contrastive adversarial ascent on the mapper.
            let eval = contrastive_loss(&self.bundle.contrastive[i], &a, &s, &negatives)?;
            losses.contrastive_adv.push(finite_loss(eval.loss, "contrastive adversarial loss")?);
            if gamma != 0.0 {
                let da = eval.protected_grad(&self.bundle.contrastive[i])?;
                let mapper = &mut self.bundle.mappers[i];
                mapper.zero_grad();
                mapper.0.backward(&map_trace, &da.scale(-gamma))?;
                if instrumented {
                    let applied = self.bundle.mappers[i].flat_grads();
                    let g = term_grads(&self.bundle.mappers[i], |mp| mp.0.backward(&map_trace, &da).map(drop))?;
                    self.check(&mut checks, BlockGroup::Mapper(i), applied, vec![(LossTerm::ContrastiveAdv(i), gamma, g)])?;
                }
                self.bundle.mappers[i].adam_step();
            }

            // Bias discriminator on the sensitive platform.
            let (a, map_trace) = self.bundle.mappers[i].map(&s)?;
            self.net.send(Role::Server, peer, K::ProtectedRepUpload, Payload::Tensor(a), false)?;
            let batch_ids = self.net.recv(peer, Role::Task, K::SampleIds)?.payload.into_ids()?;
            let a_recv = self.net.recv(peer, Role::Server, K::ProtectedRepUpload)?.payload.into_tensor()?;
            let sens_labels = self.sensitive[i].shard.labels(&batch_ids)?;
            let (ld, dlogits, bias_trace) = bias_loss(&self.bundle.bias[i], &a_recv, &sens_labels)?;
            losses.bias_disc.push(finite_loss(ld, "bias discrimination loss")?);
            let da = self.bundle.bias[i].0.input_grad(&bias_trace, &dlogits)?;
            let bias = &mut self.bundle.bias[i];
            bias.zero_grad();
            bias.0.backward(&bias_trace, &dlogits)?;
            if instrumented {
                let applied = self.bundle.bias[i].flat_grads();
                let g = term_grads(&self.bundle.bias[i], |d| {
                    let (_, dl, tr) = bias_loss(d, &a_recv, &sens_labels)?;
                    d.0.backward(&tr, &dl).map(drop)
                })?;
                self.check(&mut checks, BlockGroup::Bias(i), applied, vec![(LossTerm::BiasDisc(i), 1.0, g)])?;
            }
            self.bundle.bias[i].adam_step();
            let payload = self.gradient_payload(da)?;
            self.net.send(peer, Role::Server, K::BiasDiscGradDown, payload, false)?;

            // Mapper descends the bias loss.
            let da = self.net.recv(Role::Server, peer, K::BiasDiscGradDown)?.payload.into_tensor()?;
            let mapper = &mut self.bundle.mappers[i];
            mapper.zero_grad();
            mapper.0.backward(&map_trace, &da)?;
            if instrumented {
                let applied = self.bundle.mappers[i].flat_grads();
                let g = term_grads(&self.bundle.mappers[i], |mp| mp.0.backward(&map_trace, &da).map(drop))?;
                self.check(&mut checks, BlockGroup::Mapper(i), applied, vec![(LossTerm::BiasDisc(i), 1.0, g)])?;
            }
            self.bundle.mappers[i].adam_step();

            // Adversarial gradient through the updated discriminator and mapper.
            let (a, map_trace) = self.bundle.mappers[i].map(&s)?;
            self.net.send(Role::Server, peer, K::ProtectedRepUpload, Payload::Tensor(a), false)?;
            let a_recv = self.net.recv(peer, Role::Server, K::ProtectedRepUpload)?.payload.into_tensor()?;
            let (la, da) = adversarial_grad_on_protected(&self.bundle.bias[i], &a_recv, &sens_labels)?;
            losses.adversarial.push(finite_loss(la, "adversarial loss")?);
            let payload = self.gradient_payload(da)?;
            self.net.send(peer, Role::Server, K::AdvGradDown, payload, false)?;
            let da = self.net.recv(Role::Server, peer, K::AdvGradDown)?.payload.into_tensor()?;
            adv_grads.push(self.bundle.mappers[i].0.input_grad(&map_trace, &da)?);
        }

        // Overall gradient on s, then the aggregator and encoders.
        let ds = combine_overall_grad(&ds_task, &adv_grads, weights)?;
        finite(&ds, "gradient on the unified representation")?;
        let agg = &mut self.bundle.aggregator;
        agg.zero_grad();
        let dlocals = agg.backward(&agg_trace, &ds)?;
        // Per-term local gradients for the encoder checks, from a scratch aggregator.
        let mut local_terms: Vec<(LossTerm, f64, Vec<Tensor>)> = Vec::new();
        if instrumented {
            let applied = self.bundle.aggregator.flat_grads();
            let mut terms = Vec::new();
            let sources = std::iter::once((LossTerm::Task, 1.0, &ds_task))
                .chain(adv_grads.iter().enumerate().map(|(i, g)| (LossTerm::Adversarial(i), weights.lambda[i], g)));
            for (term, w, g) in sources {
                let mut scratch = self.bundle.aggregator.clone();
                scratch.zero_grad();
                let dl = scratch.backward(&agg_trace, g)?;
                terms.push((term, w, scratch.flat_grads()));
                local_terms.push((term, w, dl));
            }
            self.check(&mut checks, BlockGroup::Aggregator, applied, terms)?;
        }
        self.bundle.aggregator.adam_step();

        for (i, g) in dlocals.into_iter().enumerate() {
            self.net.send(Role::Server, Role::Insensitive(i), K::LocalRepGradDown, Payload::Tensor(g), false)?;
        }
        for (i, trace) in enc_traces.iter().enumerate() {
            let me = Role::Insensitive(i);
            let g = self.net.recv(me, Role::Server, K::LocalRepGradDown)?.payload.into_tensor()?;
            let enc = &mut self.bundle.encoders[i];
            enc.zero_grad();
            enc.backward(trace, &g)?;
            if instrumented {
                let applied = self.bundle.encoders[i].flat_grads();
                let mut terms = Vec::new();
                for (term, w, dl) in &local_terms {
                    let grads = term_grads(&self.bundle.encoders[i], |e| e.backward(trace, &dl[i]))?;
                    terms.push((*term, *w, grads));
                }
                self.check(&mut checks, BlockGroup::Encoder(i), applied, terms)?;
            }
            self.bundle.encoders[i].adam_step();
        }

        self.net.ensure_drained()?;
        self.round += 1;
        Ok(RoundReport {
            round,
            losses,
            ledger: checks,
        })
    }

    /// Serving flow: ids out to the insensitive platforms, local
    /// representations to the server, (perturbed) unified representation to
    /// the task platform, which returns class probabilities. Messages go to a
    /// fresh transcript.
    pub fn serve_sample(&mut self, ids: &[u64]) -> Result<(Tensor, Transcript)> {
        use PayloadKind as K;
        let n = self.insensitive.len();
        let mut net = Network::new();
        net.begin_round(self.round)?;
        for i in 0..n {
            net.send(Role::Task, Role::Insensitive(i), K::SampleIds, Payload::Ids(ids.to_vec()), false)?;
        }
        for i in 0..n {
            let me = Role::Insensitive(i);
            let batch_ids = net.recv(me, Role::Task, K::SampleIds)?.payload.into_ids()?;
            let batch = self.insensitive[i].shard.batch(&batch_ids)?;
            let (local, _) = self.bundle.encoders[i].forward(&batch, None)?;
            net.send(me, Role::Server, K::LocalRepUpload, Payload::Tensor(local), false)?;
        }
        let locals = (0..n)
            .map(|i| net.recv(Role::Server, Role::Insensitive(i), K::LocalRepUpload)?.payload.into_tensor())
            .collect::<Result<Vec<_>>>()?;
        let (s, _) = self.bundle.aggregator.forward(&locals)?;
        let ldp = self.config.ldp;
        let upload = if ldp.enabled {
            ldp_perturb(&s, &ldp, &mut self.server.ldp)?
        } else {
            s
        };
        net.send(Role::Server, Role::Task, K::UnifiedRepToTask, Payload::Tensor(upload), ldp.enabled)?;
        let s_task = net.recv(Role::Task, Role::Server, K::UnifiedRepToTask)?.payload.into_tensor()?;
        let probs = self.bundle.task_head.predict(&s_task)?;
        net.ensure_drained()?;
        Ok((probs, net.into_transcript()))
    }

    /// Class probabilities for `ids` through the serving flow, in chunks.
    pub fn predict(&mut self, ids: &[u64], chunk: usize) -> Result<Tensor> {
        let parts = ids
            .chunks(chunk.max(1))
            .map(|c| Ok(self.serve_sample(c)?.0))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::vcat(&refs)
    }

    /// Eval-mode `s` and every `a_i` for `ids`, without perturbation. Used by
    /// the attack harness, which plays an observer outside the protocol.
    pub fn representations(&self, ids: &[u64], chunk: usize) -> Result<Representations> {
        let m = self.bundle.mappers.len();
        let mut unified = Vec::new();
        let mut protected: Vec<Vec<Tensor>> = vec![Vec::new(); m];
        for c in ids.chunks(chunk.max(1)) {
            let s = self.bundle.unified(&self.platform_batches(c)?)?;
            for (i, mapper) in self.bundle.mappers.iter().enumerate() {
                protected[i].push(mapper.map(&s)?.0);
            }
            unified.push(s);
        }
        let cat = |parts: &[Tensor]| Tensor::vcat(&parts.iter().collect::<Vec<_>>());
        Ok(Representations {
            unified: cat(&unified)?,
            protected: protected.iter().map(|p| cat(p)).collect::<Result<_>>()?,
        })
    }
}
