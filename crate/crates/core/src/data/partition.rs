use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Column, FieldSpec, PlatformBatch, PlatformSchema, VerticalDataset};
use crate::nn::Tensor;
use crate::rng::stream;
use crate::{Error, Result};

/// Which platform holds which field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    /// Field names per insensitive platform, in encoder order.
    pub insensitive: Vec<Vec<String>>,
    /// Sensitive feature held by each sensitive platform.
    pub sensitive: Vec<String>,
}

impl PartitionAssignment {
    /// Seeded shuffle of the input fields into `platforms` contiguous groups
    /// whose sizes differ by at most one; sensitive platform `i` holds
    /// sensitive feature `i`.
    pub fn shuffled(ds: &VerticalDataset, platforms: usize, seed: u64) -> Result<Self> {
        if platforms == 0 || platforms > ds.fields.len() {
            return Err(Error::Config(format!(
                "cannot split {} fields over {platforms} platforms",
                ds.fields.len()
            )));
        }
        let mut names = ds.field_names();
        names.shuffle(&mut stream(seed, "partition"));
        let base = names.len() / platforms;
        let extra = names.len() % platforms;
        let mut insensitive = Vec::with_capacity(platforms);
        let mut it = names.into_iter();
        for p in 0..platforms {
            let take = base + usize::from(p < extra);
            insensitive.push(it.by_ref().take(take).collect());
        }
        Ok(Self {
            insensitive,
            sensitive: ds.sensitive.iter().map(|s| s.name.clone()).collect(),
        })
    }

    pub fn manifest(&self, task: &str) -> ShardManifest {
        ShardManifest {
            task_labels: task.to_string(),
            insensitive: self
                .insensitive
                .iter()
                .enumerate()
                .map(|(platform, fields)| InsensitiveEntry {
                    platform,
                    fields: fields.clone(),
                })
                .collect(),
            sensitive: self
                .sensitive
                .iter()
                .enumerate()
                .map(|(platform, feature)| SensitiveEntry {
                    platform,
                    feature: feature.clone(),
                })
                .collect(),
        }
    }
}

/// Audit document listing what each platform holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub task_labels: String,
    pub insensitive: Vec<InsensitiveEntry>,
    pub sensitive: Vec<SensitiveEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsensitiveEntry {
    pub platform: usize,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveEntry {
    pub platform: usize,
    pub feature: String,
}

fn id_index(ids: &[u64]) -> HashMap<u64, usize> {
    ids.iter().enumerate().map(|(r, &id)| (id, r)).collect()
}

fn rows_for(index: &HashMap<u64, usize>, ids: &[u64], platform: &str) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            index.get(id).copied().ok_or_else(|| Error::Lookup {
                platform: platform.to_string(),
                id: *id,
            })
        })
        .collect()
}

/// Feature columns of one insensitive platform.
#[derive(Debug, Clone)]
pub struct FeatureShard {
    pub platform: usize,
    pub schema: PlatformSchema,
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
    columns: Vec<Column>,
}

impl FeatureShard {
    pub fn label(&self) -> String {
        format!("insensitive:{}", self.platform)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Shard row positions of `ids`.
    pub fn rows(&self, ids: &[u64]) -> Result<Vec<usize>> {
        rows_for(&self.index, ids, &self.label())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema
            .fields
            .iter()
            .position(|f| f.name == name)
            .map(|i| &self.columns[i])
    }

    pub fn batch(&self, ids: &[u64]) -> Result<PlatformBatch> {
        let rows = rows_for(&self.index, ids, &self.label())?;
        let n_num = self.schema.numeric_count();
        let mut numeric = Tensor::zeros(rows.len(), n_num);
        let mut categorical = Vec::new();
        let mut k = 0;
        for col in &self.columns {
            match col {
                Column::Categorical(v) => categorical.push(rows.iter().map(|&r| v[r]).collect()),
                Column::Numeric(v) => {
                    for (i, &r) in rows.iter().enumerate() {
                        numeric.set(i, k, v[r]);
                    }
                    k += 1;
                }
            }
        }
        Ok(PlatformBatch { categorical, numeric })
    }
}

/// Labels of one sensitive feature, held by its sensitive platform.
#[derive(Debug, Clone)]
pub struct SensitiveShard {
    pub platform: usize,
    pub name: String,
    pub classes: Vec<String>,
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
    labels: Vec<usize>,
}

impl SensitiveShard {
    pub fn label(&self) -> String {
        format!("sensitive:{}", self.platform)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self, ids: &[u64]) -> Result<Vec<usize>> {
        Ok(rows_for(&self.index, ids, &self.label())?
            .into_iter()
            .map(|r| self.labels[r])
            .collect())
    }
}

/// Task labels, held by the task platform.
#[derive(Debug, Clone)]
pub struct TaskShard {
    pub classes: Vec<String>,
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
    labels: Vec<usize>,
}

impl TaskShard {
    pub fn labels(&self, ids: &[u64]) -> Result<Vec<usize>> {
        Ok(rows_for(&self.index, ids, "task")?
            .into_iter()
            .map(|r| self.labels[r])
            .collect())
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }
}

#[derive(Debug, Clone)]
pub struct Shards {
    pub task: TaskShard,
    pub insensitive: Vec<FeatureShard>,
    pub sensitive: Vec<SensitiveShard>,
}

impl Shards {
    pub fn schemas(&self) -> Vec<PlatformSchema> {
        self.insensitive.iter().map(|s| s.schema.clone()).collect()
    }

    pub fn sensitive_classes(&self) -> Vec<usize> {
        self.sensitive.iter().map(|s| s.classes.len()).collect()
    }
}

/// Splits the dataset into role-scoped shards.
pub fn partition_vertical(ds: &VerticalDataset, pa: &PartitionAssignment) -> Result<Shards> {
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (p, fields) in pa.insensitive.iter().enumerate() {
        if fields.is_empty() {
            return Err(Error::Config(format!("insensitive platform {p} holds no fields")));
        }
        for f in fields {
            if ds.field(f).is_none() {
                return Err(Error::Config(format!("assigned field `{f}` is not an input field")));
            }
            if let Some(prev) = owner.insert(f, p) {
                return Err(Error::Config(format!(
                    "field `{f}` assigned to platforms {prev} and {p}"
                )));
            }
        }
    }
    if let Some(f) = ds.fields.iter().find(|f| !owner.contains_key(f.spec.name.as_str())) {
        return Err(Error::Config(format!("field `{}` is not assigned to any platform", f.spec.name)));
    }
    let mut seen = BTreeMap::new();
    for (p, name) in pa.sensitive.iter().enumerate() {
        if ds.sensitive_feature(name).is_none() {
            return Err(Error::Config(format!("unknown sensitive feature `{name}`")));
        }
        if let Some(prev) = seen.insert(name.as_str(), p) {
            return Err(Error::Config(format!(
                "sensitive feature `{name}` assigned to platforms {prev} and {p}"
            )));
        }
    }
    if let Some(s) = ds.sensitive.iter().find(|s| !seen.contains_key(s.name.as_str())) {
        return Err(Error::Config(format!("sensitive feature `{}` has no platform", s.name)));
    }

    let index = id_index(&ds.ids);
    let insensitive = pa
        .insensitive
        .iter()
        .enumerate()
        .map(|(platform, names)| {
            let picked: Vec<_> = names.iter().map(|n| ds.field(n).expect("checked")).collect();
            FeatureShard {
                platform,
                schema: PlatformSchema {
                    fields: picked.iter().map(|f| f.spec.clone()).collect::<Vec<FieldSpec>>(),
                },
                ids: ds.ids.clone(),
                index: index.clone(),
                columns: picked.iter().map(|f| f.column.clone()).collect(),
            }
        })
        .collect();
    let sensitive = pa
        .sensitive
        .iter()
        .enumerate()
        .map(|(platform, name)| {
            let s = ds.sensitive_feature(name).expect("checked");
            SensitiveShard {
                platform,
                name: s.name.clone(),
                classes: s.classes.clone(),
                ids: ds.ids.clone(),
                index: index.clone(),
                labels: s.labels.clone(),
            }
        })
        .collect();
    Ok(Shards {
        task: TaskShard {
            classes: ds.task_classes.clone(),
            ids: ds.ids.clone(),
            index,
            labels: ds.task_labels.clone(),
        },
        insensitive,
        sensitive,
    })
}
