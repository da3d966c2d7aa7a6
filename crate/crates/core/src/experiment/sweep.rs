use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig};
use super::runner::run_experiment;
use crate::eval::MetricsReport;
use crate::{Error, Result};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "FAIRVFL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Contrastive adversarial weight γ of every sensitive feature.
    GammaC,
    /// Adversarial weight λ of the first sensitive feature.
    Lambda,
    /// Bias strength of synthetic data.
    Rho,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma_c" | "gamma" => Ok(SweepAxis::GammaC),
            "lambda" => Ok(SweepAxis::Lambda),
            "rho" => Ok(SweepAxis::Rho),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (gamma_c, lambda, rho)"))),
        }
    }
}

/// `base` with the axis set to `value`.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Config(format!("sweep value {value} must be finite and ≥ 0")));
    }
    let mut cfg = base.clone();
    match axis {
        SweepAxis::GammaC => cfg.weights.gamma.iter_mut().for_each(|g| *g = value),
        SweepAxis::Lambda => {
            let first = cfg
                .weights
                .lambda
                .first_mut()
                .ok_or_else(|| Error::Config("no sensitive feature to sweep".into()))?;
            *first = value;
        }
        SweepAxis::Rho => match &mut cfg.dataset {
            DatasetConfig::Synthetic(spec) => spec.bias_strength = value,
            DatasetConfig::Adult { .. } => {
                return Err(Error::Config("the rho axis needs a synthetic dataset".into()));
            }
        },
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

pub fn sweep_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n >= 1)
        .unwrap_or(1)
}

/// One full train + attack per value. Failures are recorded and the sweep
/// continues. Runs execute on up to `threads` workers, each fully isolated.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64], out: Option<&Path>, threads: usize) -> Vec<SweepRow> {
    let run_one = |k: usize, value: f64| -> SweepRow {
        let outcome = apply_axis(base, axis, value).and_then(|cfg| {
            let dir = out.map(|o| o.join(format!("run{k:02}")));
            run_experiment(&cfg, dir.as_deref(), &mut |_| {})
        });
        match outcome {
            Ok(r) => SweepRow {
                value,
                metrics: Some(r.metrics),
                error: None,
            },
            Err(e) => SweepRow {
                value,
                metrics: None,
                error: Some(e.to_string()),
            },
        }
    };
    let threads = threads.max(1).min(values.len().max(1));
    if threads == 1 {
        return values.iter().enumerate().map(|(k, &v)| run_one(k, v)).collect();
    }
    let mut rows: Vec<Option<SweepRow>> = vec![None; values.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let done = std::sync::Mutex::new(&mut rows);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if k >= values.len() {
                    break;
                }
                let row = run_one(k, values[k]);
                done.lock().expect("no panics while holding the lock")[k] = Some(row);
            });
        }
    });
    rows.into_iter().map(|r| r.expect("every index was run")).collect()
}

/// Tab-separated sweep table: axis value, then the metrics row.
pub fn sweep_table(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let header = rows.iter().find_map(|r| r.metrics.as_ref()).map(|m| m.table_header());
    out.push_str(&format!("{axis:?}\t{}\n", header.unwrap_or_else(|| "error".into())));
    for r in rows {
        match (&r.metrics, &r.error) {
            (Some(m), _) => out.push_str(&format!("{}\t{}\n", r.value, m.table_row())),
            (None, Some(e)) => out.push_str(&format!("{}\terror: {e}\n", r.value)),
            _ => {}
        }
    }
    out
}
