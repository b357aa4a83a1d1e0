use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::EvalConfig;
use crate::llm::{BackendConfig, BackendKind, TaskSpec};
use crate::metrics::{load_preset, UserCriteria};
use crate::scoring::{PowerProfile, ScoringWeights};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Termination settings. The run stops on the first condition met.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopLimits {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_cm: Option<f64>,
    /// Recorded with the run; the built-in components are deterministic and
    /// do not draw from it.
    #[serde(default)]
    pub seed: u64,
}

fn default_max_iterations() -> u32 {
    30
}

impl Default for LoopLimits {
    fn default() -> Self {
        LoopLimits {
            max_iterations: default_max_iterations(),
            budget_hours: None,
            target_cm: None,
            seed: 0,
        }
    }
}

/// Effective configuration of one discovery run, echoed verbatim into the
/// trajectory header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub task: TaskSpec,
    pub criteria: UserCriteria,
    pub scoring: ScoringWeights,
    #[serde(rename = "loop")]
    pub limits: LoopLimits,
    pub backend: BackendConfig,
    pub power: PowerProfile,
    pub trainer: EvalConfig,
}

impl LoopConfig {
    pub fn from_preset(n: u32) -> Result<Self, ConfigError> {
        let criteria = load_preset(n).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(LoopConfig {
            task: TaskSpec::default(),
            criteria,
            scoring: ScoringWeights::from_criteria(&criteria),
            limits: LoopLimits::default(),
            backend: BackendConfig::default(),
            power: PowerProfile::default(),
            trainer: EvalConfig::default(),
        })
    }

    /// Hard checks; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let warnings = self
            .criteria
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.limits.max_iterations < 1 {
            return Err(ConfigError::Invalid("loop.max_iterations must be >= 1".into()));
        }
        if let Some(b) = self.limits.budget_hours {
            if !b.is_finite() || b <= 0.0 {
                return Err(ConfigError::Invalid("loop.budget_hours must be > 0".into()));
            }
        }
        if self.limits.target_cm.is_some_and(|t| !t.is_finite()) {
            return Err(ConfigError::Invalid("loop.target_cm must be finite".into()));
        }
        if !self.scoring.is_valid() {
            return Err(ConfigError::Invalid("scoring weights must be finite and >= 0".into()));
        }
        if !self.power.is_valid() {
            return Err(ConfigError::Invalid("power draws must be finite and >= 0".into()));
        }
        let [h, w, c] = self.task.input_shape;
        if h == 0 || w == 0 || c == 0 || self.task.num_classes == 0 {
            return Err(ConfigError::Invalid(
                "task input_shape and num_classes must be >= 1".into(),
            ));
        }
        self.backend.validate().map_err(ConfigError::Invalid)?;
        self.trainer.validate().map_err(ConfigError::Invalid)?;
        Ok(warnings)
    }
}

/// `[criteria]` as written in a file: either a full set of keys, or a
/// `preset` plus any keys to override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CriteriaSection {
    preset: Option<u32>,
    pa1: Option<f64>,
    pa2: Option<f64>,
    pe1: Option<f64>,
    pe2: Option<f64>,
    pf: Option<f64>,
    ta1: Option<f64>,
    ta2: Option<f64>,
    te1: Option<f64>,
    te2: Option<f64>,
    tf: Option<f64>,
    ot: Option<f64>,
    ut: Option<f64>,
}

impl CriteriaSection {
    fn resolve(self) -> Result<UserCriteria, String> {
        let base = match self.preset {
            Some(n) => Some(load_preset(n).map_err(|e| e.to_string())?),
            None => None,
        };
        let pick = |name: &str, v: Option<f64>, from_base: Option<f64>| {
            v.or(from_base)
                .ok_or_else(|| format!("criteria.{name} missing (set it or give criteria.preset)"))
        };
        Ok(UserCriteria {
            pa1: pick("pa1", self.pa1, base.map(|b| b.pa1))?,
            pa2: pick("pa2", self.pa2, base.map(|b| b.pa2))?,
            pe1: pick("pe1", self.pe1, base.map(|b| b.pe1))?,
            pe2: pick("pe2", self.pe2, base.map(|b| b.pe2))?,
            pf: pick("pf", self.pf, base.map(|b| b.pf))?,
            ta1: pick("ta1", self.ta1, base.map(|b| b.ta1))?,
            ta2: pick("ta2", self.ta2, base.map(|b| b.ta2))?,
            te1: pick("te1", self.te1, base.map(|b| b.te1))?,
            te2: pick("te2", self.te2, base.map(|b| b.te2))?,
            tf: pick("tf", self.tf, base.map(|b| b.tf))?,
            ot: pick("ot", self.ot, base.map(|b| b.ot))?,
            ut: pick("ut", self.ut, base.map(|b| b.ut))?,
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialScoring {
    aw: Option<f64>,
    fw: Option<f64>,
    ew: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    task: Option<TaskSpec>,
    #[serde(default)]
    criteria: Option<CriteriaSection>,
    #[serde(default)]
    scoring: Option<PartialScoring>,
    #[serde(default, rename = "loop")]
    limits: Option<LoopLimits>,
    #[serde(default)]
    backend: Option<BackendConfig>,
    #[serde(default)]
    power: Option<PowerProfile>,
    #[serde(default)]
    trainer: Option<EvalConfig>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub script: Option<PathBuf>,
    /// Replaces the whole `[criteria]` section with the preset.
    pub preset: Option<u32>,
    pub max_iterations: Option<u32>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
}

fn parse_file(path: &Path, text: &str) -> Result<ConfigFile, ConfigError> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

/// Read a TOML or JSON (by extension) config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<LoopConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = parse_file(path, &text)?;
    resolve(Some(file), overrides, path)
}

/// Configuration without a file: defaults plus overrides. Criteria default
/// to preset 1 unless `overrides.preset` says otherwise.
pub fn config_from_overrides(overrides: &Overrides) -> Result<LoopConfig, ConfigError> {
    resolve(None, overrides, Path::new("<defaults>"))
}

fn resolve(file: Option<ConfigFile>, o: &Overrides, path: &Path) -> Result<LoopConfig, ConfigError> {
    let file = file.unwrap_or_default();
    let invalid = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };

    let criteria = match (o.preset, file.criteria) {
        (Some(n), _) => load_preset(n).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        (None, Some(section)) => section.resolve().map_err(invalid)?,
        (None, None) => load_preset(1).expect("preset 1"),
    };
    let derived = ScoringWeights::from_criteria(&criteria);
    let scoring = match file.scoring {
        None => derived,
        Some(s) => ScoringWeights {
            aw: s.aw.unwrap_or(derived.aw),
            fw: s.fw.unwrap_or(derived.fw),
            ew: s.ew.unwrap_or(derived.ew),
        },
    };

    let mut limits = file.limits.unwrap_or_default();
    let mut backend = file.backend.unwrap_or_default();
    if let Some(kind) = o.backend {
        backend.kind = kind;
    }
    if let Some(script) = &o.script {
        backend.script = Some(script.clone());
    }
    if let Some(t) = o.temperature {
        backend.temperature = t;
    }
    if let Some(n) = o.max_iterations {
        limits.max_iterations = n;
    }
    if let Some(seed) = o.seed {
        limits.seed = seed;
    }

    Ok(LoopConfig {
        task: file.task.unwrap_or_default(),
        criteria,
        scoring,
        limits,
        backend,
        power: file.power.unwrap_or_default(),
        trainer: file.trainer.unwrap_or_default(),
    })
}

/// TOML text of a bundled preset configuration.
pub fn preset_toml(n: u32) -> Result<String, ConfigError> {
    let cfg = LoopConfig::from_preset(n)?;
    let mut out = format!("# Experiment setting {n}\n\n");
    #[derive(Serialize)]
    struct Doc<'a> {
        task: &'a TaskSpec,
        criteria: &'a UserCriteria,
        #[serde(rename = "loop")]
        limits: &'a LoopLimits,
        backend: &'a BackendConfig,
        power: &'a PowerProfile,
        trainer: &'a EvalConfig,
    }
    out.push_str(
        &toml::to_string(&Doc {
            task: &cfg.task,
            criteria: &cfg.criteria,
            limits: &cfg.limits,
            backend: &cfg.backend,
            power: &cfg.power,
            trainer: &cfg.trainer,
        })
        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
    );
    Ok(out)
}
