use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::LossWeights;
use crate::data::{AdultOptions, PartitionAssignment, SyntheticSpec};
use crate::eval::AttackerConfig;
use crate::models::{Architecture, RepWidths};
use crate::nn::AdamConfig;
use crate::protocol::FederationConfig;
use crate::rng::fnv1a;
use crate::{Error, Result};

/// Environment variable overriding the default ADULT directory.
pub const ADULT_DIR_ENV: &str = "FAIRVFL_ADULT_DIR";

pub const PRESETS: [&str; 3] = ["adult-fairvfl", "adult-vfl", "synthetic-smoke"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Adult {
        /// `adult.data`/`adult.test` directory or a single file.
        path: PathBuf,
        #[serde(default)]
        sampling: AdultOptions,
    },
    Synthetic(SyntheticSpec),
}

impl DatasetConfig {
    pub fn default_adult_path() -> PathBuf {
        std::env::var_os(ADULT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data/adult"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    /// Insensitive platform count for the seeded field shuffle.
    pub platforms: usize,
    pub shuffle_seed: u64,
    /// Explicit layout; overrides the shuffle. Synthetic data without one
    /// uses the generator's own layout.
    pub assignment: Option<PartitionAssignment>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            platforms: 3,
            shuffle_seed: 2022,
            assignment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub attackers: AttackerConfig,
    pub fairness: bool,
    /// Categorical input fields probed from the protected representations.
    pub privacy_fields: Vec<String>,
    pub chunk: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            attackers: AttackerConfig::default(),
            fairness: true,
            privacy_fields: vec!["education".into(), "relationship".into()],
            chunk: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub arch: Architecture,
    pub weights: LossWeights,
    pub federation: FederationConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many rounds in total, whatever the epoch count.
    pub max_rounds: Option<u64>,
    pub seed: u64,
    pub eval: EvalConfig,
    /// Output directory; not part of the fingerprint.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::adult_fairvfl()
    }
}

impl ExperimentConfig {
    pub fn adult_fairvfl() -> Self {
        Self {
            name: "adult-fairvfl".into(),
            dataset: DatasetConfig::Adult {
                path: DatasetConfig::default_adult_path(),
                sampling: AdultOptions::default(),
            },
            partition: PartitionConfig::default(),
            arch: Architecture::default(),
            weights: LossWeights::adult(),
            federation: FederationConfig::default(),
            optimizer: AdamConfig::default(),
            batch_size: 32,
            epochs: 10,
            max_rounds: None,
            seed: 1,
            eval: EvalConfig::default(),
            out: None,
        }
    }

    pub fn adult_vfl() -> Self {
        Self {
            name: "adult-vfl".into(),
            weights: LossWeights::zeros(2),
            ..Self::adult_fairvfl()
        }
    }

    /// Small synthetic federation: two platforms, one binary sensitive
    /// feature with a proxy at ρ = 0.9. Trains in a few seconds.
    pub fn synthetic_smoke() -> Self {
        Self {
            name: "synthetic-smoke".into(),
            dataset: DatasetConfig::Synthetic(SyntheticSpec {
                samples: 8000,
                ..SyntheticSpec::default()
            }),
            partition: PartitionConfig {
                platforms: 2,
                ..PartitionConfig::default()
            },
            arch: Architecture {
                widths: RepWidths {
                    unified: 32,
                    protected: vec![16],
                },
                embed_dim: 8,
                encoder_hidden: 32,
                attention_heads: 4,
                pool_hidden: 16,
                task_hidden: 32,
                mapper_hidden: 128,
                contrastive_hidden: 32,
                bias_hidden: 128,
                dropout: 0.2,
            },
            weights: LossWeights::new(vec![10.0], vec![0.25]).expect("valid weights"),
            federation: FederationConfig::default(),
            optimizer: AdamConfig::with_lr(1e-3),
            batch_size: 32,
            epochs: 40,
            max_rounds: None,
            seed: 1,
            eval: EvalConfig {
                attackers: AttackerConfig::default(),
                fairness: true,
                privacy_fields: Vec::new(),
                chunk: 1024,
            },
            out: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "adult-fairvfl" => Ok(Self::adult_fairvfl()),
            "adult-vfl" => Ok(Self::adult_vfl()),
            "synthetic-smoke" => Ok(Self::synthetic_smoke()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.weights.validate()?;
        self.federation.validate()?;
        self.eval.attackers.validate()?;
        let m = self.arch.widths.protected.len();
        if self.weights.len() != m {
            return Err(Error::Config(format!(
                "{} loss weights for {m} protected widths",
                self.weights.len()
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be ≥ 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.optimizer.lr)));
        }
        if self.eval.chunk == 0 {
            return Err(Error::Config("evaluation chunk must be ≥ 1".into()));
        }
        match &self.dataset {
            DatasetConfig::Synthetic(spec) => {
                spec.validate()?;
                if spec.sensitive_classes.len() != m {
                    return Err(Error::Config(format!(
                        "{} synthetic sensitive features for {m} protected widths",
                        spec.sensitive_classes.len()
                    )));
                }
            }
            DatasetConfig::Adult { .. } => {
                if m != 2 {
                    return Err(Error::Config(format!("ADULT has 2 sensitive features, config declares {m}")));
                }
            }
        }
        Ok(())
    }

    /// Canonical serialization: JSON with the output directory cleared.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config always serializes")
    }

    /// FNV-1a of [`canonical`](Self::canonical), as 16 hex digits.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a(self.canonical().as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.fingerprint(), cfg.fingerprint());
        }
    }

    #[test]
    fn fingerprint_ignores_output_dir_only() {
        let a = ExperimentConfig::adult_fairvfl();
        let mut b = a.clone();
        b.out = Some("/tmp/x".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn adult_hyperparameters() {
        let cfg = ExperimentConfig::adult_fairvfl();
        assert_eq!(cfg.weights.lambda, vec![1e2, 1e1]);
        assert_eq!(cfg.weights.gamma, vec![0.25, 0.25]);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.optimizer.lr, 1e-4);
        assert_eq!(cfg.arch.dropout, 0.2);
        assert_eq!(cfg.federation.negative_pool, 5);
        let vfl = ExperimentConfig::adult_vfl();
        assert!(vfl.weights.lambda.iter().chain(&vfl.weights.gamma).all(|&w| w == 0.0));
    }
}
