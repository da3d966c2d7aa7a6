//! `fairvfl`: train, attack, audit and sweep runs of the simulator.
//!
//! Exit codes: 0 success, 1 audit or validation failure, 2 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairvfl_core::experiment::{
    attack_checkpoint, run_experiment, run_sweep, sweep_table, sweep_threads, ExperimentConfig, SweepAxis,
};
use fairvfl_core::protocol::{traffic_check, AuditPolicy, AuditReport, Transcript};
use fairvfl_core::Error;

#[derive(Parser)]
#[command(name = "fairvfl", version, about = "Fair vertical federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// adult-fairvfl, adult-vfl or synthetic-smoke.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the global seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train, checkpoint the best validation epoch and evaluate.
    Train(Common),
    /// Probe a saved checkpoint for fairness and privacy leakage.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Check a transcript against the privacy boundary.
    Audit {
        transcript: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Treat the run as LDP-enabled even if the config says otherwise.
        #[arg(long)]
        ldp: bool,
    },
    /// One train + attack per value of a hyper-parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// gamma_c, lambda or rho.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

enum Failure {
    Validation(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric { .. } | Error::Diverged { .. } => Failure::Numeric(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config("pass --config <path> or --preset <name>".into())),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(dir: Option<&Path>, name: &str, text: &str) -> Result<(), Error> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn train(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    eprintln!("run {} ({}), fingerprint {}", cfg.name, cfg.seed, cfg.fingerprint());
    let result = run_experiment(&cfg, cfg.out.as_deref(), &mut |e| {
        eprintln!(
            "epoch {:>2}  rounds {:>6}  task loss {:.4}  val acc {:.4}",
            e.epoch, e.rounds, e.mean_losses.task, e.val_accuracy
        )
    })?;
    println!("{}", result.metrics.to_json());
    eprintln!(
        "best epoch {}, train {:.1}s, eval {:.1}s",
        result.best_epoch, result.wall.train_seconds, result.wall.eval_seconds
    );
    Ok(())
}

fn attack(c: &Common, checkpoint: &Path) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let report = attack_checkpoint(&cfg, checkpoint)?;
    write_json(cfg.out.as_deref(), "attack.json", &report.to_json())?;
    println!("{}", report.to_json());
    Ok(())
}

fn audit(path: &Path, c: &Common, ldp: bool) -> Result<bool, Failure> {
    let cfg = if c.config.is_some() || c.preset.is_some() {
        Some(load_config(c)?)
    } else {
        None
    };
    let transcript = Transcript::load(path)?;
    let policy = AuditPolicy {
        ldp_enabled: ldp || cfg.as_ref().is_some_and(|c| c.federation.ldp.enabled),
    };
    let report = AuditReport::build(&transcript, &policy);
    println!("messages: {}", report.messages);
    println!("violations: {}", report.violations.len());
    for v in &report.violations {
        println!(
            "  #{} round {}: {:?} ({} -> {}, {:?})",
            v.index, v.round, v.kind, v.sender, v.receiver, v.payload
        );
    }
    for (kind, n) in &report.counts {
        println!("  {kind}: {n}");
    }
    let mut formula_ok = true;
    match &cfg {
        Some(cfg) => {
            let widths = &cfg.arch.widths.protected;
            println!("fairness traffic per round (4·E·ΣH, ΣH = {}):", widths.iter().sum::<usize>());
            for r in traffic_check(&transcript, widths) {
                formula_ok &= r.matches();
                println!(
                    "  round {}: E = {}, observed {}, expected {}{}",
                    r.round,
                    r.batch,
                    r.observed,
                    r.expected,
                    if r.matches() { "" } else { "  MISMATCH" }
                );
            }
        }
        None => {
            println!("fairness traffic per round (pass --config or --preset to check 4·E·ΣH):");
            for (round, floats) in &report.fairness_traffic {
                println!("  round {round}: {floats}");
            }
        }
    }
    if let Some(cfg) = &cfg {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_json(cfg.out.as_deref(), "audit.json", &json)?;
    }
    Ok(report.is_clean() && formula_ok)
}

fn sweep(c: &Common, axis: SweepAxis, values: &[f64]) -> Result<bool, Failure> {
    let cfg = load_config(c)?;
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Failure::Validation(format!("sweep value {bad} must be finite and ≥ 0")));
    }
    let rows = run_sweep(&cfg, axis, values, cfg.out.as_deref(), sweep_threads());
    let table = sweep_table(axis, &rows);
    write_json(cfg.out.as_deref(), "sweep.tsv", &table)?;
    print!("{table}");
    Ok(rows.iter().all(|r| r.error.is_none()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(c) => train(c).map(|_| true),
        Command::Attack { common, checkpoint } => attack(common, checkpoint).map(|_| true),
        Command::Audit { transcript, common, ldp } => audit(transcript, common, *ldp),
        Command::Sweep { common, axis, values } => sweep(common, *axis, values),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(2)
        }
    }
}
