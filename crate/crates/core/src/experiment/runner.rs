use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig};
use crate::data::{
    generate_synthetic, iterate_batches, load_adult, partition_vertical, FieldKind, PartitionAssignment, ShardManifest,
    Split, VerticalDataset,
};
use crate::eval::{
    argmax_rows, majority_baseline, privacy_inference_attack, probe, shuffled_label_baseline, task_metrics, CommStats,
    FairnessProbe, MetricsReport, PrivacyProbe, ProbeTarget,
};
use crate::models::{Checkpoint, ModelBundle};
use crate::protocol::{fairness_comm_cost, traffic_check, Federation, RoundLosses, Transcript};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Dataset, partition manifest and a fresh federation for `cfg`.
pub struct Prepared {
    pub dataset: VerticalDataset,
    pub manifest: ShardManifest,
    pub federation: Federation,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<VerticalDataset> {
    match &cfg.dataset {
        DatasetConfig::Adult { path, sampling } => load_adult(path, sampling),
        DatasetConfig::Synthetic(spec) => generate_synthetic(spec),
    }
}

pub fn assignment(cfg: &ExperimentConfig, ds: &VerticalDataset) -> Result<PartitionAssignment> {
    if let Some(a) = &cfg.partition.assignment {
        return Ok(a.clone());
    }
    match &cfg.dataset {
        DatasetConfig::Synthetic(spec) => Ok(spec.assignment()),
        DatasetConfig::Adult { .. } => PartitionAssignment::shuffled(ds, cfg.partition.platforms, cfg.partition.shuffle_seed),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let pa = assignment(cfg, &dataset)?;
    let shards = partition_vertical(&dataset, &pa)?;
    let bundle = ModelBundle::new(
        &cfg.arch,
        &shards.schemas(),
        dataset.task_classes.len(),
        &shards.sensitive_classes(),
        cfg.optimizer,
        cfg.seed,
    )?;
    let federation = Federation::new(shards, bundle, cfg.federation.clone(), cfg.seed)?;
    Ok(Prepared {
        manifest: pa.manifest(&dataset.task_name),
        dataset,
        federation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub rounds: u64,
    pub mean_losses: RoundLosses,
    pub val_accuracy: f64,
}

fn mean_losses(all: &[RoundLosses]) -> RoundLosses {
    let n = all.len().max(1) as f64;
    let avg = |f: &dyn Fn(&RoundLosses) -> &Vec<f64>| -> Vec<f64> {
        let width = all.first().map_or(0, |l| f(l).len());
        (0..width).map(|i| all.iter().map(|l| f(l)[i]).sum::<f64>() / n).collect()
    };
    RoundLosses {
        task: all.iter().map(|l| l.task).sum::<f64>() / n,
        contrastive_disc: avg(&|l| &l.contrastive_disc),
        contrastive_adv: avg(&|l| &l.contrastive_adv),
        bias_disc: avg(&|l| &l.bias_disc),
        adversarial: avg(&|l| &l.adversarial),
    }
}

/// Accuracy of the task prediction on `split` through the serving flow.
pub fn split_accuracy(fed: &mut Federation, ds: &VerticalDataset, split: Split, chunk: usize) -> Result<f64> {
    let ids = ds.ids_of(split);
    if ids.is_empty() {
        return Ok(f64::NAN);
    }
    let pred = argmax_rows(&fed.predict(&ids, chunk)?);
    Ok(task_metrics(&pred, &fed.task_labels(&ids)?)?.accuracy)
}

pub struct Trained {
    pub prepared: Prepared,
    pub curves: Vec<EpochStats>,
    pub best_epoch: usize,
    pub transcript: Transcript,
}

/// Runs the configured epochs and restores the parameters of the epoch with
/// the best validation accuracy (the first on ties).
pub fn train(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&EpochStats)) -> Result<Trained> {
    let mut prepared = prepare(cfg)?;
    let ds = &prepared.dataset;
    let fed = &mut prepared.federation;
    let mut curves = Vec::new();
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    'epochs: for epoch in 0..cfg.epochs {
        let mut losses = Vec::new();
        for batch in iterate_batches(ds, Split::Train, cfg.batch_size, cfg.seed, epoch) {
            if cfg.max_rounds.is_some_and(|cap| fed.round() >= cap) {
                break;
            }
            let round = fed.round();
            let report = fed.run_training_round(&batch, &cfg.weights).map_err(|e| match e {
                Error::Numeric { what, sample } => Error::Diverged { round, what, sample },
                other => other,
            })?;
            losses.push(report.losses);
        }
        if losses.is_empty() {
            break 'epochs;
        }
        let val_accuracy = split_accuracy(fed, ds, Split::Val, cfg.eval.chunk)?;
        let stats = EpochStats {
            epoch,
            rounds: fed.round(),
            mean_losses: mean_losses(&losses),
            val_accuracy,
        };
        progress(&stats);
        if best.as_ref().map_or(true, |(acc, _, _)| val_accuracy > *acc || acc.is_nan()) {
            best = Some((val_accuracy, epoch, fed.bundle().checkpoint()));
        }
        curves.push(stats);
    }
    let best_epoch = match best {
        Some((_, epoch, ckpt)) => {
            fed.bundle_mut().load_checkpoint(&ckpt)?;
            epoch
        }
        None => 0,
    };
    let transcript = fed.take_transcript();
    Ok(Trained {
        prepared,
        curves,
        best_epoch,
        transcript,
    })
}

pub fn comm_stats(t: &Transcript, batch_size: usize, protected_widths: &[usize]) -> CommStats {
    let rounds = traffic_check(t, protected_widths);
    CommStats {
        rounds: rounds.len() as u64,
        messages: t.len(),
        fairness_floats_per_round: rounds.iter().find(|r| r.batch == batch_size).map(|r| r.observed),
        formula_holds: rounds.iter().all(|r| r.matches()),
        fairness_floats_total: fairness_comm_cost(t),
    }
}

/// Task metrics on the test split plus every configured probe.
pub fn evaluate(cfg: &ExperimentConfig, ds: &VerticalDataset, fed: &mut Federation, comm: CommStats) -> Result<MetricsReport> {
    let chunk = cfg.eval.chunk;
    let attack = &cfg.eval.attackers;
    let train_ids = ds.ids_of(Split::Train);
    let test_ids = ds.ids_of(Split::Test);
    let pred = argmax_rows(&fed.predict(&test_ids, chunk)?);
    let task = task_metrics(&pred, &fed.task_labels(&test_ids)?)?;

    let needs_reps = cfg.eval.fairness || !cfg.eval.privacy_fields.is_empty();
    let (train_reps, test_reps) = if needs_reps {
        (Some(fed.representations(&train_ids, chunk)?), Some(fed.representations(&test_ids, chunk)?))
    } else {
        (None, None)
    };

    let mut fairness = BTreeMap::new();
    if cfg.eval.fairness {
        let (tr, te) = (train_reps.as_ref().expect("computed"), test_reps.as_ref().expect("computed"));
        for (i, feature) in ds.sensitive.iter().enumerate() {
            let y_train = fed.sensitive_labels(i, &train_ids)?;
            let y_test = fed.sensitive_labels(i, &test_ids)?;
            let score = probe(
                &tr.unified,
                &y_train,
                &te.unified,
                &y_test,
                feature.classes.len(),
                attack,
                derive_seed(cfg.seed, &format!("eval/fairness/{}", feature.name)),
            )?;
            fairness.insert(
                feature.name.clone(),
                FairnessProbe {
                    score,
                    random_baseline: shuffled_label_baseline(&y_test),
                    majority_baseline: majority_baseline(&y_test),
                },
            );
        }
    }

    let mut privacy = BTreeMap::new();
    for field in &cfg.eval.privacy_fields {
        let (tr, te) = (train_reps.as_ref().expect("computed"), test_reps.as_ref().expect("computed"));
        let shard = (0..fed.insensitive_count())
            .filter_map(|p| fed.feature_shard(p))
            .find(|s| s.column(field).is_some())
            .ok_or_else(|| Error::Evaluation(format!("no platform holds field `{field}`")))?;
        let spec = shard.schema.fields.iter().find(|f| &f.name == field).expect("column exists");
        let classes = match &spec.kind {
            FieldKind::Categorical { vocab } => vocab.len(),
            FieldKind::Numeric => 0,
        };
        let target = ProbeTarget::from_column(
            field,
            shard.column(field).expect("column exists"),
            classes,
            &shard.rows(&train_ids)?,
            &shard.rows(&test_ids)?,
        )?;
        let score = privacy_inference_attack(
            &tr.protected,
            &te.protected,
            &target,
            attack,
            derive_seed(cfg.seed, &format!("eval/privacy/{field}")),
        )?;
        privacy.insert(
            field.clone(),
            PrivacyProbe {
                random_baseline: shuffled_label_baseline(&target.test),
                score,
            },
        );
    }

    Ok(MetricsReport {
        task,
        fairness,
        privacy,
        comm,
        config_fingerprint: cfg.fingerprint(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallStats {
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub metrics: MetricsReport,
    pub checkpoint_path: Option<PathBuf>,
    pub transcript_path: Option<PathBuf>,
    pub curves: Vec<EpochStats>,
    pub best_epoch: usize,
    pub wall: WallStats,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Train, evaluate and, when `out` is given, write every artifact there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>, progress: &mut dyn FnMut(&EpochStats)) -> Result<RunResult> {
    let t0 = Instant::now();
    let mut trained = train(cfg, progress)?;
    let train_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let comm = comm_stats(&trained.transcript, cfg.batch_size, &cfg.arch.widths.protected);
    let metrics = evaluate(cfg, &trained.prepared.dataset, &mut trained.prepared.federation, comm)?;
    let wall = WallStats {
        train_seconds,
        eval_seconds: t1.elapsed().as_secs_f64(),
    };
    let mut result = RunResult {
        metrics,
        checkpoint_path: None,
        transcript_path: None,
        curves: trained.curves,
        best_epoch: trained.best_epoch,
        wall,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        cfg.save(&dir.join("config.toml"))?;
        write(&dir.join("fingerprint"), &format!("{}\n", cfg.fingerprint()))?;
        write(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(&trained.prepared.manifest).expect("manifest serializes"),
        )?;
        let ckpt = dir.join("checkpoint.bin");
        trained.prepared.federation.bundle().checkpoint().save(&ckpt)?;
        let transcript = dir.join("transcript.jsonl");
        trained.transcript.save(&transcript)?;
        write(&dir.join("metrics.json"), &result.metrics.to_json())?;
        write(
            &dir.join("metrics.tsv"),
            &format!("{}\n{}\n", result.metrics.table_header(), result.metrics.table_row()),
        )?;
        result.checkpoint_path = Some(ckpt);
        result.transcript_path = Some(transcript);
        write(&dir.join("run.json"), &serde_json::to_string_pretty(&result).expect("result serializes"))?;
    }
    Ok(result)
}

/// Re-evaluates a saved checkpoint under `cfg` (no training).
pub fn attack_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<MetricsReport> {
    let mut prepared = prepare(cfg)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    prepared.federation.bundle_mut().load_checkpoint(&ckpt)?;
    evaluate(cfg, &prepared.dataset, &mut prepared.federation, CommStats::default())
}
