//! Dataset ingestion and vertical partitioning.
//!
//! A [`VerticalDataset`] is the full, centrally described table used to set
//! up a simulation. It is split once into role-scoped shards
//! ([`partition_vertical`]); after that every platform only sees its shard.
//! Sensitive features live in a separate type from input fields, so an
//! insensitive shard cannot carry one.

mod adult;
mod batch;
mod partition;
mod synthetic;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use adult::{bucketize_age, load_adult, AdultOptions, AGE_BUCKETS, ADULT_INPUT_FIELDS};
pub use batch::{iterate_batches, BatchPlan};
pub use partition::{
    partition_vertical, FeatureShard, InsensitiveEntry, PartitionAssignment, SensitiveEntry, SensitiveShard, ShardManifest,
    Shards, TaskShard,
};
pub use synthetic::{generate_synthetic, SyntheticPlatform, SyntheticSpec};

use crate::nn::Tensor;
use crate::{Error, Result};

/// Reserved vocabulary entry at index 0 of every categorical field.
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldKind {
    /// `vocab[0]` is [`UNK`].
    Categorical { vocab: Vec<String> },
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FieldKind::Categorical { .. })
    }
}

/// Input fields held by one insensitive platform, in encoder order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSchema {
    pub fields: Vec<FieldSpec>,
}

impl PlatformSchema {
    pub fn numeric_count(&self) -> usize {
        self.fields.iter().filter(|f| !f.is_categorical()).count()
    }

    pub fn categorical_names(&self) -> impl Iterator<Item = &str> {
        self.fields
            .iter()
            .filter(|f| f.is_categorical())
            .map(|f| f.name.as_str())
    }

    pub fn field_names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.name.clone()).collect()
    }
}

/// One platform's feature slice for a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformBatch {
    /// One index column per categorical field, in schema order.
    pub categorical: Vec<Vec<u32>>,
    /// `rows × numeric fields`, in schema order.
    pub numeric: Tensor,
}

impl PlatformBatch {
    pub fn rows(&self) -> usize {
        self.numeric.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Categorical(Vec<u32>),
    Numeric(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical(v) => v.len(),
            Column::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An input field: schema plus values for every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub spec: FieldSpec,
    pub column: Column,
}

/// A fairness-sensitive attribute, used only as an adversarial target.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveFeature {
    pub name: String,
    pub classes: Vec<String>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalDataset {
    pub ids: Vec<u64>,
    pub fields: Vec<Field>,
    pub task_name: String,
    pub task_classes: Vec<String>,
    pub task_labels: Vec<usize>,
    pub sensitive: Vec<SensitiveFeature>,
    pub split: Vec<Split>,
}

impl VerticalDataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.spec.name == name)
    }

    pub fn field_names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.spec.name.clone()).collect()
    }

    pub fn sensitive_feature(&self, name: &str) -> Option<&SensitiveFeature> {
        self.sensitive.iter().find(|s| s.name == name)
    }

    /// Row positions of a split, in dataset order.
    pub fn rows_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.split[r] == split).collect()
    }

    pub fn ids_of(&self, split: Split) -> Vec<u64> {
        self.rows_of(split).into_iter().map(|r| self.ids[r]).collect()
    }

    pub fn index(&self) -> HashMap<u64, usize> {
        self.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect()
    }

    /// Checks column lengths, id uniqueness and label ranges.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.index().len() != n {
            return Err(Error::Data("sample ids are not unique".into()));
        }
        if self.task_labels.len() != n || self.split.len() != n {
            return Err(Error::Data("task labels or split tags have the wrong length".into()));
        }
        for f in &self.fields {
            if f.column.len() != n {
                return Err(Error::Data(format!("field `{}` has {} values, expected {n}", f.spec.name, f.column.len())));
            }
            if self.sensitive.iter().any(|s| s.name == f.spec.name) {
                return Err(Error::Data(format!("sensitive feature `{}` is also an input field", f.spec.name)));
            }
        }
        for s in &self.sensitive {
            if s.labels.len() != n {
                return Err(Error::Data(format!("sensitive `{}` has the wrong length", s.name)));
            }
            if s.labels.iter().any(|&l| l >= s.classes.len()) {
                return Err(Error::Label(format!("sensitive `{}` label out of range", s.name)));
            }
        }
        if self.task_labels.iter().any(|&l| l >= self.task_classes.len()) {
            return Err(Error::Label("task label out of range".into()));
        }
        Ok(())
    }
}
