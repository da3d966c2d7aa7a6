//! Synthetic vertically partitioned data with a controllable bias proxy.
//!
//! Each sensitive feature `i` is drawn uniformly over its classes. A proxy
//! field `proxy{i}` (held by insensitive platform `i mod n`) copies the
//! sensitive label with probability ρ and is uniform otherwise. The task
//! label is a fixed rule over the non-proxy fields,
//! `y = [Σ numeric + ½ Σ_categorical (±1 by value parity) > 0]`,
//! flipped with probability `label_noise`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adult::standardize;
use super::{Column, PartitionAssignment, Field, FieldKind, FieldSpec, SensitiveFeature, Split, VerticalDataset, UNK};
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticPlatform {
    pub numeric: usize,
    /// Cardinality of each categorical field.
    pub categorical: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub platforms: Vec<SyntheticPlatform>,
    pub sensitive_classes: Vec<usize>,
    /// ρ ∈ [0, 1].
    pub bias_strength: f64,
    pub label_noise: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            samples: 4000,
            platforms: vec![
                SyntheticPlatform {
                    numeric: 2,
                    categorical: vec![4],
                },
                SyntheticPlatform {
                    numeric: 2,
                    categorical: vec![3],
                },
            ],
            sensitive_classes: vec![2],
            bias_strength: 0.9,
            label_noise: 0.05,
            val_fraction: 0.1,
            test_fraction: 0.25,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bias_strength) {
            return Err(Error::Config(format!("bias strength {} outside [0, 1]", self.bias_strength)));
        }
        if !(0.0..=0.05).contains(&self.label_noise) {
            return Err(Error::Config(format!("label noise {} outside [0, 0.05]", self.label_noise)));
        }
        if self.platforms.is_empty() {
            return Err(Error::Config("at least one insensitive platform".into()));
        }
        if self.sensitive_classes.iter().any(|&c| c < 2) {
            return Err(Error::Config("sensitive features need ≥ 2 classes".into()));
        }
        if self.platforms.iter().flat_map(|p| &p.categorical).any(|&c| c < 2) {
            return Err(Error::Config("categorical fields need ≥ 2 values".into()));
        }
        let frac = self.val_fraction + self.test_fraction;
        if self.val_fraction < 0.0 || self.test_fraction <= 0.0 || frac >= 1.0 {
            return Err(Error::Config("split fractions must leave a train split".into()));
        }
        if self.samples < 10 {
            return Err(Error::Config("need at least 10 samples".into()));
        }
        Ok(())
    }
}

/// Box–Muller standard normal draw.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn vocab(k: usize) -> Vec<String> {
    std::iter::once(UNK.to_string())
        .chain((0..k).map(|v| format!("v{v}")))
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<VerticalDataset> {
    spec.validate()?;
    let n = spec.samples;
    let mut rng = stream(spec.seed, "synthetic");

    let sensitive_labels: Vec<Vec<usize>> = spec
        .sensitive_classes
        .iter()
        .map(|&c| (0..n).map(|_| rng.gen_range(0..c)).collect())
        .collect();

    // (platform, spec) pairs for every field, proxies appended to their platform
    let mut per_platform: Vec<Vec<(FieldSpec, Column)>> = vec![Vec::new(); spec.platforms.len()];
    let mut score = vec![0.0; n];
    for (p, plat) in spec.platforms.iter().enumerate() {
        for j in 0..plat.numeric {
            let raw: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            for (s, v) in score.iter_mut().zip(&raw) {
                *s += v;
            }
            per_platform[p].push((
                FieldSpec {
                    name: format!("p{p}_num{j}"),
                    kind: FieldKind::Numeric,
                },
                Column::Numeric(raw),
            ));
        }
        for (j, &card) in plat.categorical.iter().enumerate() {
            let vals: Vec<u32> = (0..n).map(|_| rng.gen_range(0..card) as u32).collect();
            for (s, &v) in score.iter_mut().zip(&vals) {
                *s += if v % 2 == 0 { 0.5 } else { -0.5 };
            }
            per_platform[p].push((
                FieldSpec {
                    name: format!("p{p}_cat{j}"),
                    kind: FieldKind::Categorical { vocab: vocab(card) },
                },
                Column::Categorical(vals.into_iter().map(|v| v + 1).collect()),
            ));
        }
    }
    for (i, (&classes, labels)) in spec.sensitive_classes.iter().zip(&sensitive_labels).enumerate() {
        let vals: Vec<u32> = labels
            .iter()
            .map(|&l| {
                if rng.gen::<f64>() < spec.bias_strength {
                    l as u32
                } else {
                    rng.gen_range(0..classes) as u32
                }
            })
            .collect();
        per_platform[i % spec.platforms.len()].push((
            FieldSpec {
                name: format!("proxy{i}"),
                kind: FieldKind::Categorical { vocab: vocab(classes) },
            },
            Column::Categorical(vals.into_iter().map(|v| v + 1).collect()),
        ));
    }

    let task_labels: Vec<usize> = score
        .iter()
        .map(|&s| {
            let y = usize::from(s > 0.0);
            if rng.gen::<f64>() < spec.label_noise {
                1 - y
            } else {
                y
            }
        })
        .collect();

    let n_test = ((n as f64) * spec.test_fraction).round() as usize;
    let n_val = ((n as f64) * spec.val_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(spec.seed, "synthetic/split"));
    let mut split = vec![Split::Train; n];
    for (k, &r) in order.iter().enumerate() {
        if k < n_test {
            split[r] = Split::Test;
        } else if k < n_test + n_val {
            split[r] = Split::Val;
        }
    }

    let fields = per_platform
        .into_iter()
        .flatten()
        .map(|(spec, column)| Field {
            column: match column {
                Column::Numeric(raw) => Column::Numeric(standardize(&raw, &split)),
                c => c,
            },
            spec,
        })
        .collect();

    let ds = VerticalDataset {
        ids: (1..=n as u64).collect(),
        fields,
        task_name: "rule".into(),
        task_classes: vec!["neg".into(), "pos".into()],
        task_labels,
        sensitive: spec
            .sensitive_classes
            .iter()
            .zip(sensitive_labels)
            .enumerate()
            .map(|(i, (&c, labels))| SensitiveFeature {
                name: format!("sensitive{i}"),
                classes: (0..c).map(|k| format!("s{k}")).collect(),
                labels,
            })
            .collect(),
        split,
    };
    ds.validate()?;
    Ok(ds)
}

impl SyntheticSpec {
    /// Name of the proxy field for sensitive feature `i`.
    pub fn proxy_name(i: usize) -> String {
        format!("proxy{i}")
    }

    /// The generator's natural layout: each platform holds the fields it was
    /// generated with, proxies included.
    pub fn assignment(&self) -> PartitionAssignment {
        let mut insensitive: Vec<Vec<String>> = self
            .platforms
            .iter()
            .enumerate()
            .map(|(p, plat)| {
                (0..plat.numeric)
                    .map(|j| format!("p{p}_num{j}"))
                    .chain((0..plat.categorical.len()).map(|j| format!("p{p}_cat{j}")))
                    .collect()
            })
            .collect();
        for i in 0..self.sensitive_classes.len() {
            insensitive[i % self.platforms.len()].push(Self::proxy_name(i));
        }
        PartitionAssignment {
            insensitive,
            sensitive: (0..self.sensitive_classes.len()).map(|i| format!("sensitive{i}")).collect(),
        }
    }
}
