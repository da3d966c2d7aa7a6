//! Ledger, audit and determinism checks over the synthetic federation.

use fairvfl_core::data::{iterate_batches, Split};
use fairvfl_core::experiment::{prepare, run_experiment, ExperimentConfig, Prepared};
use fairvfl_core::protocol::*;

pub fn smoke() -> ExperimentConfig {
    ExperimentConfig::synthetic_smoke()
}

pub fn train_batches(p: &Prepared, cfg: &ExperimentConfig, rounds: usize) -> Vec<Vec<u64>> {
    iterate_batches(&p.dataset, Split::Train, cfg.batch_size, cfg.seed, 0)
        .into_iter()
        .take(rounds)
        .collect()
}

fn record(sender: Role, receiver: Role, kind: PayloadKind, ldp: bool) -> TranscriptRecord {
    TranscriptRecord {
        round: 3,
        sender,
        receiver,
        kind,
        shape: [4, 2],
        float_count: 8,
        payload_digest: "0000000000000000".into(),
        ldp,
    }
}

pub fn instrumented_rounds_satisfy_the_sign_ledger() {
    let cfg = smoke();
    let mut p = prepare(&cfg).unwrap();
    p.federation.set_instrumented(true);
    for ids in train_batches(&p, &cfg, 25) {
        let report = p.federation.run_training_round(&ids, &cfg.weights).unwrap();
        let n = p.federation.insensitive_count();
        let m = p.federation.sensitive_count();
        // encoders, aggregator, task head, then per feature: D^c, mapper
        // (twice), D^a
        assert_eq!(report.ledger.len(), n + 2 + 4 * m);
        for check in &report.ledger {
            assert!(check.passed, "{check:?}");
            assert!(check.max_error <= fairvfl_core::adversarial::LEDGER_TOLERANCE);
        }
    }
}

pub fn every_training_message_uses_a_legal_edge() {
    let cfg = smoke();
    let mut p = prepare(&cfg).unwrap();
    for ids in train_batches(&p, &cfg, 100) {
        p.federation.run_training_round(&ids, &cfg.weights).unwrap();
    }
    let report = AuditReport::build(p.federation.transcript(), &AuditPolicy::default());
    assert!(report.is_clean(), "{:?}", report.violations);
    assert_eq!(report.fairness_traffic.len(), 100);
}

pub fn each_injected_violation_is_flagged_once() {
    use PayloadKind as K;
    use Role::*;
    let mut cfg = smoke();
    cfg.federation.ldp.enabled = true;
    let policy = AuditPolicy { ldp_enabled: true };
    let mut p = prepare(&cfg).unwrap();
    for ids in train_batches(&p, &cfg, 3) {
        p.federation.run_training_round(&ids, &cfg.weights).unwrap();
    }
    let clean = p.federation.take_transcript();
    assert!(audit_transcript(&clean, &policy).is_empty());
    let fixtures = [
        (record(Insensitive(0), Server, K::RawFeatures, false), ViolationKind::RawFeatureLeak),
        (record(Insensitive(1), Task, K::LocalRepUpload, false), ViolationKind::LocalRepMisrouted),
        (record(Server, Task, K::UnifiedRepToTask, false), ViolationKind::UnperturbedUnified),
        (record(Server, Sensitive(0), K::UnifiedRepToTask, true), ViolationKind::UnifiedToSensitive),
        (record(Sensitive(0), Server, K::SensitiveLabels, false), ViolationKind::SensitiveLabelLeak),
        (record(Sensitive(0), Task, K::AdvGradDown, false), ViolationKind::IllegalEdge),
        (record(Task, Server, K::TaskLabels, false), ViolationKind::IllegalEdge),
    ];
    for (rec, kind) in fixtures {
        let mut t = Transcript::new();
        let (head, tail) = clean.records().split_at(clean.len() / 2);
        head.iter().cloned().for_each(|r| t.push(r));
        t.push(rec);
        tail.iter().cloned().for_each(|r| t.push(r));
        let found = audit_transcript(&t, &policy);
        assert_eq!(found.len(), 1, "{kind:?}: {found:?}");
        assert_eq!(found[0].kind, kind);
        assert_eq!((found[0].index, found[0].round), (head.len(), 3));
    }
}

pub fn identical_seeds_give_identical_runs() {
    let cfg = smoke();
    let run = || {
        let mut p = prepare(&cfg).unwrap();
        for ids in train_batches(&p, &cfg, 30) {
            p.federation.run_training_round(&ids, &cfg.weights).unwrap();
        }
        (p.federation.take_transcript().to_jsonl(), p.federation.bundle().checkpoint().to_bytes())
    };
    assert_eq!(run(), run());
    let mut other = cfg.clone();
    other.seed += 1;
    let mut p = prepare(&other).unwrap();
    let ids = train_batches(&p, &other, 1).remove(0);
    p.federation.run_training_round(&ids, &other.weights).unwrap();
    assert_ne!(p.federation.bundle().checkpoint().to_bytes(), run().1);
}

/// Complete train-and-evaluate runs, artifacts compared byte for byte.
pub fn full_runs_are_bitwise_identical() {
    let cfg = smoke();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_experiment(&cfg, Some(d.path()), &mut |_| {}).unwrap();
    }
    for f in ["transcript.jsonl", "checkpoint.bin", "metrics.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}
