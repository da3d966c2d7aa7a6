//! Ingestion, partitioning and the synthetic generator.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use fairvfl_core::data::*;
use fairvfl_core::experiment::ADULT_DIR_ENV;

fn adult_dir() -> Option<PathBuf> {
    let dir = std::env::var_os(ADULT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/adult"));
    if dir.join("adult.data").exists() {
        Some(dir)
    } else {
        eprintln!("ADULT files not found under {}; skipping", dir.display());
        None
    }
}

fn categorical(ds: &VerticalDataset, name: &str) -> Vec<u32> {
    match &ds.field(name).unwrap().column {
        Column::Categorical(v) => v.clone(),
        Column::Numeric(_) => panic!("{name} is numeric"),
    }
}

/// Plug-in mutual information in nats.
fn mutual_information(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut px: HashMap<usize, f64> = HashMap::new();
    let mut py: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_default() += 1.0;
        *px.entry(a).or_default() += 1.0;
        *py.entry(b).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|(&(a, b), &c)| {
            let p = c / n;
            p * (p / ((px[&a] / n) * (py[&b] / n))).ln()
        })
        .sum()
}

fn synthetic(rho: f64) -> VerticalDataset {
    generate_synthetic(&SyntheticSpec {
        samples: 20_000,
        bias_strength: rho,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

#[test]
fn unbiased_proxy_is_independent() {
    let ds = synthetic(0.0);
    let proxy: Vec<usize> = categorical(&ds, &SyntheticSpec::proxy_name(0)).iter().map(|&v| v as usize).collect();
    let mi = mutual_information(&proxy, &ds.sensitive[0].labels);
    assert!(mi < 0.01, "mutual information {mi}");
}

#[test]
fn fully_biased_proxy_copies_the_label() {
    let ds = synthetic(1.0);
    let proxy = categorical(&ds, &SyntheticSpec::proxy_name(0));
    for (p, &s) in proxy.iter().zip(&ds.sensitive[0].labels) {
        assert_eq!(*p as usize, s + 1, "vocabulary index 0 is reserved");
    }
}

#[test]
fn synthetic_is_deterministic_and_seed_sensitive() {
    let spec = SyntheticSpec::default();
    assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    let other = SyntheticSpec { seed: 8, ..spec.clone() };
    assert_ne!(generate_synthetic(&spec).unwrap().task_labels, generate_synthetic(&other).unwrap().task_labels);
}

#[test]
fn synthetic_spec_validation() {
    let bad = [
        SyntheticSpec { bias_strength: 1.5, ..SyntheticSpec::default() },
        SyntheticSpec { label_noise: 0.2, ..SyntheticSpec::default() },
        SyntheticSpec { sensitive_classes: vec![1], ..SyntheticSpec::default() },
        SyntheticSpec { test_fraction: 0.95, ..SyntheticSpec::default() },
    ];
    for spec in bad {
        assert!(generate_synthetic(&spec).is_err(), "{spec:?}");
    }
}

#[test]
fn partition_covers_every_field_exactly_once() {
    let ds = synthetic(0.9);
    for platforms in 1..=ds.fields.len() {
        let pa = PartitionAssignment::shuffled(&ds, platforms, 3).unwrap();
        let shards = partition_vertical(&ds, &pa).unwrap();
        let mut seen = BTreeSet::new();
        for shard in &shards.insensitive {
            assert!(!shard.schema.fields.is_empty());
            for f in &shard.schema.fields {
                assert!(seen.insert(f.name.clone()), "{} twice", f.name);
                assert!(ds.sensitive_feature(&f.name).is_none());
            }
        }
        assert_eq!(seen, ds.field_names().into_iter().collect());
        let sizes: Vec<usize> = shards.insensitive.iter().map(|s| s.schema.fields.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
    }
}

#[test]
fn partition_rejects_bad_assignments() {
    let ds = synthetic(0.9);
    let good = SyntheticSpec::default().assignment();
    let mut dup = good.clone();
    let first = dup.insensitive[0][0].clone();
    dup.insensitive[1].push(first);
    let mut missing = good.clone();
    missing.insensitive[0].pop();
    let mut sensitive_input = good.clone();
    sensitive_input.insensitive[0].push("sensitive0".into());
    let mut empty = good.clone();
    empty.insensitive.push(Vec::new());
    for pa in [dup, missing, sensitive_input, empty] {
        assert!(partition_vertical(&ds, &pa).is_err(), "{pa:?}");
    }
    assert!(PartitionAssignment::shuffled(&ds, 0, 1).is_err());
    assert!(PartitionAssignment::shuffled(&ds, ds.fields.len() + 1, 1).is_err());
}

#[test]
fn shards_answer_by_sample_id() {
    let ds = synthetic(0.9);
    let shards = partition_vertical(&ds, &SyntheticSpec::default().assignment()).unwrap();
    let ids = vec![ds.ids[7], ds.ids[2]];
    assert_eq!(shards.task.labels(&ids).unwrap(), vec![ds.task_labels[7], ds.task_labels[2]]);
    assert_eq!(
        shards.sensitive[0].labels(&ids).unwrap(),
        vec![ds.sensitive[0].labels[7], ds.sensitive[0].labels[2]]
    );
    let batch = shards.insensitive[0].batch(&ids).unwrap();
    assert_eq!(batch.rows(), 2);
    assert!(matches!(shards.task.labels(&[u64::MAX]), Err(fairvfl_core::Error::Lookup { .. })));
}

#[test]
fn manifest_lists_every_holder() {
    let ds = synthetic(0.9);
    let pa = SyntheticSpec::default().assignment();
    let m = pa.manifest(&ds.task_name);
    assert_eq!(m.task_labels, "rule");
    assert_eq!(m.insensitive.len(), 2);
    assert_eq!(m.sensitive[0].feature, "sensitive0");
    let json = serde_json::to_string(&m).unwrap();
    assert_eq!(serde_json::from_str::<ShardManifest>(&json).unwrap(), m);
}

#[test]
fn batches_are_deterministic_per_epoch() {
    let ds = synthetic(0.9);
    let a: Vec<_> = iterate_batches(&ds, Split::Train, 32, 5, 0);
    let b: Vec<_> = iterate_batches(&ds, Split::Train, 32, 5, 0);
    let c: Vec<_> = iterate_batches(&ds, Split::Train, 32, 5, 1);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn adult_has_twelve_inputs_and_two_sensitive_features() {
    let Some(dir) = adult_dir() else { return };
    let ds = load_adult(&dir, &AdultOptions::default()).unwrap();
    assert_eq!(ds.field_names(), ADULT_INPUT_FIELDS.to_vec());
    assert_eq!(ds.len(), 30_000);
    assert_eq!(ds.rows_of(Split::Train).len(), 18_000);
    assert_eq!(ds.rows_of(Split::Val).len(), 2_000);
    assert_eq!(ds.rows_of(Split::Test).len(), 10_000);
    let names: Vec<&str> = ds.sensitive.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["gender", "age"]);
    assert!(ds.field("sex").is_none() && ds.field("age").is_none());

    let gender = &ds.sensitive[0].labels;
    for f in &ds.fields {
        if let Column::Categorical(v) = &f.column {
            let mut map = HashMap::new();
            let determines = v.iter().zip(gender).all(|(a, g)| *map.entry(*a).or_insert(*g) == *g);
            assert!(!determines, "{} determines gender", f.spec.name);
        }
    }

    let age = &ds.sensitive[1].labels;
    // The oldest bucket is thin on this census extract (about 1.2%); every
    // bucket still needs enough mass for the attackers to see it.
    for k in 0..AGE_BUCKETS.len() {
        let share = age.iter().filter(|&&a| a == k).count() as f64 / age.len() as f64;
        let floor = if k + 1 == AGE_BUCKETS.len() { 0.01 } else { 0.02 };
        assert!(share >= floor, "bucket {} holds {share}", AGE_BUCKETS[k]);
    }
    assert_eq!(load_adult(&dir, &AdultOptions::default()).unwrap(), ds);
}

#[test]
fn adult_parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adult.data");
    std::fs::write(
        &path,
        "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K\n\
         oops, State-gov\n",
    )
    .unwrap();
    match load_adult(&path, &AdultOptions::default()) {
        Err(fairvfl_core::Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}
