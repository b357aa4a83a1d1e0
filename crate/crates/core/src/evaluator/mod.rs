//! Turning a validated architecture into a [`MetricsRecord`].
//!
//! Two routes: a deterministic closed-form surrogate used for tests and dry
//! runs, and an external trainer adapter spoken to over the line protocol in
//! [`protocol`].

mod adapter;
pub mod protocol;
mod surrogate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::ValidatedArch;
use crate::metrics::MetricsRecord;
use crate::scoring::{energy_kwh_pue, PowerProfile};

pub use adapter::{evaluate_adapter, AdapterEvaluator};
pub use surrogate::{evaluate_surrogate, SurrogateEvaluator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Surrogate,
    Adapter,
}

/// Which measured phase the training-set energy E1 is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum E1Phase {
    /// Training itself.
    #[default]
    Train,
    /// Re-evaluating the trained model on the training set.
    TrainEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_batch_size")]
    pub batch_size: u32,
    #[serde(default = "default_dataset")]
    pub dataset: String,
    #[serde(default)]
    pub augment: bool,
    /// Adapter program and leading arguments; `serve` is appended.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
    #[serde(default = "default_adapter_timeout")]
    pub timeout_secs: u64,
    /// Training-set size used by the surrogate's evaluation timings.
    #[serde(default = "default_train_images")]
    pub train_images: u64,
    #[serde(default = "default_val_images")]
    pub val_images: u64,
    #[serde(default)]
    pub e1_phase: E1Phase,
    /// Free-form hardware label recorded with adapter-measured FPS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardware_tag: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

fn default_epochs() -> u32 {
    20
}
fn default_batch_size() -> u32 {
    512
}
fn default_dataset() -> String {
    "cifar10".into()
}
fn default_adapter_timeout() -> u64 {
    6 * 3600
}
fn default_train_images() -> u64 {
    45_000
}
fn default_val_images() -> u64 {
    5_000
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::Surrogate,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            dataset: default_dataset(),
            augment: false,
            command: Vec::new(),
            timeout_secs: default_adapter_timeout(),
            train_images: default_train_images(),
            val_images: default_val_images(),
            e1_phase: E1Phase::Train,
            hardware_tag: None,
            notes: String::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs < 1 {
            return Err("trainer epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return Err("trainer batch_size must be >= 1".into());
        }
        if self.mode == EvalMode::Adapter && self.command.is_empty() {
            return Err("adapter mode requires a launch command".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergySource {
    /// Every energy figure derived from durations and the power profile.
    Profile,
    /// Every energy figure reported by the adapter.
    Adapter,
    /// Some figures reported, the rest derived.
    Mixed,
}

/// Energy of each measured phase, kWh-PUE.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseEnergy {
    pub train: f64,
    pub train_eval: f64,
    pub eval: f64,
}

impl PhaseEnergy {
    pub fn total(&self) -> f64 {
        self.train + self.train_eval + self.eval
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metrics: MetricsRecord,
    pub train_hours: f64,
    pub train_eval_hours: f64,
    pub eval_hours: f64,
    pub energy: PhaseEnergy,
    pub energy_source: EnergySource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardware_tag: Option<String>,
    /// Raw adapter output lines; empty for the surrogate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<String>,
}

impl EvalResult {
    pub fn total_hours(&self) -> f64 {
        self.train_hours + self.train_eval_hours + self.eval_hours
    }
}

/// Phase energies from durations, with adapter-reported values taking
/// precedence for E1/E2. Returns `(phases, e1, e2, source)`.
pub(crate) fn resolve_energy(
    train_hours: f64,
    train_eval_hours: f64,
    eval_hours: f64,
    reported_e1: Option<f64>,
    reported_e2: Option<f64>,
    phase: E1Phase,
    power: &PowerProfile,
) -> (PhaseEnergy, f64, f64, EnergySource) {
    let mut phases = PhaseEnergy {
        train: energy_kwh_pue(train_hours, power),
        train_eval: energy_kwh_pue(train_eval_hours, power),
        eval: energy_kwh_pue(eval_hours, power),
    };
    if let Some(e1) = reported_e1 {
        match phase {
            E1Phase::Train => phases.train = e1,
            E1Phase::TrainEval => phases.train_eval = e1,
        }
    }
    if let Some(e2) = reported_e2 {
        phases.eval = e2;
    }
    let e1 = match phase {
        E1Phase::Train => phases.train,
        E1Phase::TrainEval => phases.train_eval,
    };
    let source = match (reported_e1.is_some(), reported_e2.is_some()) {
        (true, true) => EnergySource::Adapter,
        (false, false) => EnergySource::Profile,
        _ => EnergySource::Mixed,
    };
    (phases, e1, phases.eval, source)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("AdapterLaunchFailed: {0}")]
    AdapterLaunchFailed(String),
    #[error("ProtocolViolation at line {line}: {message}")]
    ProtocolViolation { line: usize, message: String },
    #[error("AdapterReportedError: {0}")]
    AdapterReportedError(String),
    #[error("AdapterTimeout after {0} s")]
    AdapterTimeout(u64),
    #[error("evaluator configuration: {0}")]
    Config(String),
}

impl EvalError {
    pub fn class(&self) -> &'static str {
        match self {
            EvalError::AdapterLaunchFailed(_) => "AdapterLaunchFailed",
            EvalError::ProtocolViolation { .. } => "ProtocolViolation",
            EvalError::AdapterReportedError(_) => "AdapterReportedError",
            EvalError::AdapterTimeout(_) => "AdapterTimeout",
            EvalError::Config(_) => "Config",
        }
    }
}

pub trait Evaluator {
    fn evaluate(&mut self, arch: &ValidatedArch) -> Result<EvalResult, EvalError>;
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&mut self, arch: &ValidatedArch) -> Result<EvalResult, EvalError> {
        (**self).evaluate(arch)
    }
}

pub fn open_evaluator(
    cfg: &EvalConfig,
    power: &PowerProfile,
) -> Result<Box<dyn Evaluator>, EvalError> {
    cfg.validate().map_err(EvalError::Config)?;
    Ok(match cfg.mode {
        EvalMode::Surrogate => Box::new(SurrogateEvaluator::new(cfg.clone(), *power)),
        EvalMode::Adapter => Box::new(AdapterEvaluator::new(cfg.clone(), *power)),
    })
}
