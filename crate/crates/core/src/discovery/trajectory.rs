use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::LoopConfig;
use crate::evaluator::EvalResult;
use crate::expert::{generate_instructions, resolve_conflicts, RefinedCommand};
use crate::llm::PromptRecord;
use crate::metrics::MetricsRecord;
use crate::scoring::{combined_effectiveness, ScoreReport, ScoringWeights};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub schema_version: u32,
    pub run_id: String,
    pub created_at: String,
    pub prompt_template_version: String,
    pub config: LoopConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Backend,
    Extract,
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Failure {
    pub stage: FailureStage,
    pub class: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationRecord {
    pub index: usize,
    /// Instructions the prompt was built from; empty on the first iteration.
    pub command: RefinedCommand,
    pub prompt: PromptRecord,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub best_so_far: bool,
    pub generation_hours: f64,
    pub energy_kwh: f64,
    pub co2_lbs: f64,
}

impl IterationRecord {
    pub fn metrics(&self) -> Option<&MetricsRecord> {
        self.eval.as_ref().map(|e| &e.metrics)
    }

    pub fn hours(&self) -> f64 {
        self.generation_hours + self.eval.as_ref().map_or(0.0, EvalResult::total_hours)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    BudgetExhausted,
    TargetReached,
    BackendFatal,
    EvaluatorFatal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Totals {
    pub hours: f64,
    pub generation_hours: f64,
    pub eval_hours: f64,
    pub energy_kwh: f64,
    pub co2_lbs: f64,
}

impl Totals {
    pub fn add(&mut self, r: &IterationRecord) {
        let eval_hours = r.eval.as_ref().map_or(0.0, EvalResult::total_hours);
        self.hours += r.generation_hours + eval_hours;
        self.generation_hours += r.generation_hours;
        self.eval_hours += eval_hours;
        self.energy_kwh += r.energy_kwh;
        self.co2_lbs += r.co2_lbs;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub iterations: usize,
    pub successes: usize,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_cm: Option<f64>,
    pub totals: Totals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectoryLine {
    Header(Box<TrajectoryHeader>),
    Iteration(Box<IterationRecord>),
    Summary(RunSummary),
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrajectory {
    pub header: TrajectoryHeader,
    pub records: Vec<IterationRecord>,
    pub summary: Option<RunSummary>,
}

impl RunTrajectory {
    pub fn best(&self) -> Option<&IterationRecord> {
        let idx = self.summary.as_ref()?.best_index?;
        self.records.get(idx)
    }

    pub fn totals(&self) -> Totals {
        let mut t = Totals::default();
        for r in &self.records {
            t.add(r);
        }
        t
    }
}

pub fn trajectory_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.trajectory.jsonl"))
}

pub fn best_arch_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.best.arch.json"))
}

/// Append-only JSONL writer, flushed and synced after every line.
#[derive(Debug)]
pub struct TrajectoryWriter {
    path: PathBuf,
    file: File,
}

impl TrajectoryWriter {
    /// Fails if the file already exists.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().write(true).create_new(true).open(path)?;
        Ok(TrajectoryWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, line: &TrajectoryLine) -> std::io::Result<()> {
        let mut text = serde_json::to_string(line).map_err(std::io::Error::other)?;
        text.push('\n');
        self.file.write_all(text.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read trajectory {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("DivergenceDetected at iterations {0:?}")]
    DivergenceDetected(Vec<usize>),
}

/// A re-derived trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub trajectory: RunTrajectory,
    pub weights: ScoringWeights,
    /// Best iteration by strict CM improvement, recomputed.
    pub best_index: Option<usize>,
    /// The last line was cut short (the run was interrupted mid-write).
    pub truncated: bool,
}

/// Parse a trajectory file without re-deriving anything.
pub fn read_trajectory(path: &Path) -> Result<(RunTrajectory, bool), ReplayError> {
    let io = |source| ReplayError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut lines: Vec<String> = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line.map_err(io)?);
    }
    let ends_with_newline = std::fs::read(path)
        .map_err(io)?
        .last()
        .is_none_or(|b| *b == b'\n');

    let mut header = None;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut summary = None;
    let mut truncated = false;
    let count = lines.len();
    for (n, text) in lines.iter().enumerate() {
        if text.trim().is_empty() {
            continue;
        }
        let parsed: TrajectoryLine = match serde_json::from_str(text) {
            Ok(p) => p,
            Err(e) if n + 1 == count && !ends_with_newline => {
                warn!("ignoring truncated final trajectory line: {e}");
                truncated = true;
                break;
            }
            Err(e) => {
                return Err(ReplayError::SchemaMismatch(format!("line {}: {e}", n + 1)));
            }
        };
        match (parsed, n) {
            (TrajectoryLine::Header(h), 0) => {
                if h.schema_version != TRAJECTORY_SCHEMA_VERSION {
                    return Err(ReplayError::SchemaMismatch(format!(
                        "schema_version {} (expected {TRAJECTORY_SCHEMA_VERSION})",
                        h.schema_version
                    )));
                }
                header = Some(*h);
            }
            (TrajectoryLine::Header(_), _) => {
                return Err(ReplayError::SchemaMismatch(format!(
                    "line {}: header after the first line",
                    n + 1
                )))
            }
            (_, 0) => {
                return Err(ReplayError::SchemaMismatch(
                    "first line is not a header".into(),
                ))
            }
            (TrajectoryLine::Iteration(r), _) => {
                if summary.is_some() {
                    return Err(ReplayError::SchemaMismatch(format!(
                        "line {}: iteration after summary",
                        n + 1
                    )));
                }
                if r.index != records.len() {
                    return Err(ReplayError::SchemaMismatch(format!(
                        "line {}: iteration index {} out of sequence",
                        n + 1,
                        r.index
                    )));
                }
                records.push(*r);
            }
            (TrajectoryLine::Summary(s), _) => summary = Some(s),
        }
    }
    let header = header.ok_or_else(|| ReplayError::SchemaMismatch("empty trajectory".into()))?;
    Ok((
        RunTrajectory {
            header,
            records,
            summary,
        },
        truncated,
    ))
}

/// Re-derive every instruction list, score and best-model decision from the
/// stored metrics. `weights` replaces the recorded scoring weights.
pub fn replay(path: &Path, weights: Option<ScoringWeights>) -> Result<ReplayReport, ReplayError> {
    let (trajectory, truncated) = read_trajectory(path)?;
    let cfg = &trajectory.header.config;
    let weights = weights.unwrap_or(cfg.scoring);

    let mut diverged = Vec::new();
    let mut last_metrics: Option<MetricsRecord> = None;
    let mut best: Option<(usize, f64)> = None;
    for r in &trajectory.records {
        let command = match &last_metrics {
            Some(m) => resolve_conflicts(&generate_instructions(m, &cfg.criteria)),
            None => RefinedCommand::empty(),
        };
        let mut ok = command == r.command;

        let mut is_best = false;
        match (r.metrics(), &r.score) {
            (Some(m), Some(stored)) => {
                let score = combined_effectiveness(m, &cfg.criteria, &weights);
                ok &= score == *stored;
                if best.is_none_or(|(_, cm)| score.cm > cm) {
                    best = Some((r.index, score.cm));
                    is_best = true;
                }
                last_metrics = Some(*m);
            }
            (None, None) => {}
            _ => ok = false,
        }
        ok &= is_best == r.best_so_far;
        if !ok {
            diverged.push(r.index);
        }
    }

    if let Some(s) = &trajectory.summary {
        let best_index = best.map(|(i, _)| i);
        if s.best_index != best_index {
            if let Some(i) = s.best_index.or(best_index) {
                if !diverged.contains(&i) {
                    diverged.push(i);
                }
            }
        }
    }

    if !diverged.is_empty() {
        diverged.sort_unstable();
        return Err(ReplayError::DivergenceDetected(diverged));
    }
    Ok(ReplayReport {
        trajectory,
        weights,
        best_index: best.map(|(i, _)| i),
        truncated,
    })
}
