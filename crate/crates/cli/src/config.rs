//! TOML run configuration: solver backend selection and limits, training
//! hyperparameters, architecture profile.
//!
//! ```toml
//! [solver]
//! backend = "highs"            # or "process"
//! cmd = "python3"              # process backend only
//! args = ["tools/solve_mps.py", "{mps}", "--out", "{sol}",
//!         "--time-limit", "{time_limit}", "--gap", "{gap}"]
//! time_limit_s = 3600.0
//! mip_gap = 1e-6
//!
//! [train]
//! epochs = 400
//! batch = 64
//! lr = 1e-3
//! l1 = 1e-4
//! l2 = 1e-5
//! dropout = 0.01
//! optimizer = "adam"           # or "adagrad"
//! profile = "desk"             # or "paper"
//! ```

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use std::path::Path;
use vvo_core::milp::{HighsBackend, ProcessBackend, SolveLimits, SolverBackend};
use vvo_core::surrogate::{ArchConfig, Optimizer, TrainConfig};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_cmd")]
    pub cmd: String,
    #[serde(default = "default_args")]
    pub args: Vec<String>,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    #[serde(default = "default_gap")]
    pub mip_gap: f64,
}

fn default_backend() -> String {
    "highs".into()
}
fn default_cmd() -> String {
    "python3".into()
}
fn default_args() -> Vec<String> {
    [
        "tools/solve_mps.py",
        "{mps}",
        "--out",
        "{sol}",
        "--time-limit",
        "{time_limit}",
        "--gap",
        "{gap}",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}
fn default_time_limit() -> f64 {
    3600.0
}
fn default_gap() -> f64 {
    1e-6
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: default_backend(),
            cmd: default_cmd(),
            args: default_args(),
            time_limit_s: default_time_limit(),
            mip_gap: default_gap(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_l1")]
    pub l1: f64,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_profile")]
    pub profile: String,
}

fn default_epochs() -> usize {
    400
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_l1() -> f64 {
    1e-4
}
fn default_l2() -> f64 {
    1e-5
}
fn default_dropout() -> f64 {
    0.01
}
fn default_optimizer() -> String {
    "adam".into()
}
fn default_profile() -> String {
    "desk".into()
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            batch: default_batch(),
            lr: default_lr(),
            l1: default_l1(),
            l2: default_l2(),
            dropout: default_dropout(),
            optimizer: default_optimizer(),
            profile: default_profile(),
        }
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<AppConfig> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
            None => Ok(AppConfig::default()),
        }
    }

    pub fn backend(&self) -> Result<Box<dyn SolverBackend>> {
        match self.solver.backend.as_str() {
            "highs" => Ok(Box::new(HighsBackend::default())),
            "process" => Ok(Box::new(ProcessBackend::new(
                self.solver.cmd.clone(),
                self.solver.args.clone(),
            ))),
            other => bail!("unknown solver backend {other:?} (expected highs or process)"),
        }
    }

    pub fn limits(&self) -> SolveLimits {
        SolveLimits {
            time_limit_s: Some(self.solver.time_limit_s),
            mip_gap: Some(self.solver.mip_gap),
            capture_trace: false,
        }
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let arch = match self.train.profile.as_str() {
            "desk" => ArchConfig::desk(),
            "paper" => ArchConfig::paper(),
            other => bail!("unknown architecture profile {other:?} (expected desk or paper)"),
        };
        let optimizer = match self.train.optimizer.as_str() {
            "adam" => Optimizer::Adam,
            "adagrad" => Optimizer::Adagrad,
            other => bail!("unknown optimizer {other:?} (expected adam or adagrad)"),
        };
        Ok(TrainConfig {
            arch,
            epochs: self.train.epochs,
            batch: self.train.batch,
            lr: self.train.lr,
            l1: self.train.l1,
            l2: self.train.l2,
            dropout: self.train.dropout,
            optimizer,
            seed,
        })
    }
}
