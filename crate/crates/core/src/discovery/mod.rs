//! The generate / validate / evaluate / score / refine loop.

mod config;
mod trajectory;

use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::evaluator::{EvalError, Evaluator};
use crate::expert::{generate_instructions, resolve_conflicts, RefinedCommand};
use crate::llm::{
    build_prompt, extract_arch, BackendError, ExtractError, ValidatedArch, LlmBackend, PromptContext, PROMPT_TEMPLATE_VERSION,
};
use crate::metrics::MetricsRecord;
use crate::scoring::{co2_lbs, combined_effectiveness};

pub use config::{
    config_from_overrides, load_config, preset_toml, ConfigError, LoopConfig, LoopLimits,
    Overrides,
};
pub use trajectory::{
    best_arch_path, read_trajectory, replay, trajectory_path, Failure, FailureStage,
    IterationRecord, ReplayError, ReplayReport, RunSummary, RunTrajectory, StopReason, Totals,
    TrajectoryHeader, TrajectoryLine, TrajectoryWriter, TRAJECTORY_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run output {0} already exists")]
    RunExists(PathBuf),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("backend failed fatally at iteration {iteration}: {error}")]
    BackendFatal {
        iteration: usize,
        error: BackendError,
        trajectory: Box<RunTrajectory>,
    },
    #[error("evaluator failed fatally at iteration {iteration}: {error}")]
    EvaluatorFatal {
        iteration: usize,
        error: EvalError,
        trajectory: Box<RunTrajectory>,
    },
}

impl DiscoveryError {
    /// The trajectory recorded before a fatal error.
    pub fn partial_trajectory(&self) -> Option<&RunTrajectory> {
        match self {
            DiscoveryError::BackendFatal { trajectory, .. }
            | DiscoveryError::EvaluatorFatal { trajectory, .. } => Some(trajectory),
            _ => None,
        }
    }
}

/// Where a run writes its files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub run_id: String,
    /// `None` keeps the trajectory in memory only.
    pub out_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out_dir: Option<PathBuf>) -> Self {
        RunOptions {
            run_id: new_run_id(),
            out_dir,
        }
    }
}

pub fn new_run_id() -> String {
    let uuid = uuid::Uuid::new_v4().simple().to_string();
    format!(
        "run-{}-{}",
        chrono::Utc::now().format("%Y%m%dT%H%M%SZ"),
        &uuid[..8]
    )
}

enum Attempt {
    Arch(ValidatedArch),
    Unusable(ExtractError),
    Backend(BackendError),
}

fn is_fatal_eval(e: &EvalError) -> bool {
    matches!(e, EvalError::Config(_) | EvalError::AdapterLaunchFailed(_))
}

struct Output {
    writer: TrajectoryWriter,
    best_path: PathBuf,
}

impl Output {
    fn open(dir: &Path, run_id: &str) -> Result<Self, DiscoveryError> {
        let path = trajectory_path(dir, run_id);
        let best_path = best_arch_path(dir, run_id);
        if path.exists() || best_path.exists() {
            return Err(DiscoveryError::RunExists(path));
        }
        let writer = TrajectoryWriter::create(&path).map_err(|source| match source.kind() {
            std::io::ErrorKind::AlreadyExists => DiscoveryError::RunExists(path.clone()),
            _ => DiscoveryError::Io {
                path: path.clone(),
                source,
            },
        })?;
        Ok(Output { writer, best_path })
    }

    fn write(&mut self, line: &TrajectoryLine) -> Result<(), DiscoveryError> {
        self.writer.write(line).map_err(|source| DiscoveryError::Io {
            path: self.writer.path().to_path_buf(),
            source,
        })
    }

    fn export_best(&self, doc: &serde_json::Value) -> Result<(), DiscoveryError> {
        let io = |source| DiscoveryError::Io {
            path: self.best_path.clone(),
            source,
        };
        let tmp = self.best_path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(doc).expect("documents serialize");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(io)?;
        std::fs::rename(&tmp, &self.best_path).map_err(io)
    }
}

/// Run the loop until a limit is hit. Failed iterations count toward
/// `max_iterations`; the next prompt carries their error.
pub fn run_discovery(
    cfg: &LoopConfig,
    backend: &mut dyn LlmBackend,
    evaluator: &mut dyn Evaluator,
    opts: &RunOptions,
) -> Result<RunTrajectory, DiscoveryError> {
    for w in cfg.validate()? {
        warn!("{w}");
    }
    let mut out = match &opts.out_dir {
        Some(dir) => Some(Output::open(dir, &opts.run_id)?),
        None => None,
    };
    let header = TrajectoryHeader {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        run_id: opts.run_id.clone(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        prompt_template_version: PROMPT_TEMPLATE_VERSION.to_string(),
        config: cfg.clone(),
    };
    if let Some(o) = out.as_mut() {
        o.write(&TrajectoryLine::Header(Box::new(header.clone())))?;
    }

    let mut traj = RunTrajectory {
        header,
        records: Vec::new(),
        summary: None,
    };
    let mut totals = Totals::default();
    let mut last_metrics: Option<MetricsRecord> = None;
    let mut last_good_doc: Option<String> = None;
    let mut context: Option<PromptContext> = None;
    let mut best: Option<(usize, f64)> = None;
    let mut successes = 0;
    let mut stop_reason = StopReason::MaxIterations;

    for index in 0..cfg.limits.max_iterations as usize {
        let command = match &last_metrics {
            Some(m) => resolve_conflicts(&generate_instructions(m, &cfg.criteria)),
            None => RefinedCommand::empty(),
        };

        let mut attempt_ctx = context.clone();
        let mut attempts = 0;
        let mut generation_hours = 0.0;
        let (prompt, response, outcome) = loop {
            attempts += 1;
            let prompt = build_prompt(
                &cfg.task,
                &command,
                attempt_ctx.as_ref(),
                cfg.backend.temperature,
                index,
            );
            let completion = match backend.complete(&prompt) {
                Ok(c) => c,
                Err(e) => {
                    if e.is_fatal() || attempts > cfg.backend.max_retries {
                        break (prompt, None, Attempt::Backend(e));
                    }
                    warn!("iteration {index}: backend error, retrying: {e}");
                    continue;
                }
            };
            generation_hours += completion.elapsed_hours;
            match extract_arch(&completion.text) {
                Ok(arch) => break (prompt, Some(completion.text), Attempt::Arch(arch)),
                Err(e) if attempts > cfg.backend.max_retries => {
                    break (prompt, Some(completion.text), Attempt::Unusable(e))
                }
                Err(e) => {
                    warn!("iteration {index}: unusable architecture, retrying: {e}");
                    attempt_ctx = Some(PromptContext {
                        previous_document: e.fragment().map(str::to_string).or(last_good_doc.clone()),
                        previous_metrics: last_metrics,
                        error: Some(e.to_string()),
                        error_layer: e.layer().map(str::to_string),
                    });
                }
            }
        };

        let mut record = IterationRecord {
            index,
            command,
            prompt,
            attempts,
            response,
            arch: None,
            params: None,
            flops: None,
            eval: None,
            score: None,
            failure: None,
            best_so_far: false,
            generation_hours,
            energy_kwh: 0.0,
            co2_lbs: 0.0,
        };

        let mut fatal = None;
        match outcome {
            Attempt::Backend(e) => {
                record.failure = Some(Failure {
                    stage: FailureStage::Backend,
                    class: backend_class(&e).to_string(),
                    message: e.to_string(),
                    layer: None,
                });
                if e.is_fatal() {
                    fatal = Some(Err(e));
                }
            }
            Attempt::Unusable(e) => {
                record.failure = Some(Failure {
                    stage: FailureStage::Extract,
                    class: e.class().to_string(),
                    message: e.to_string(),
                    layer: e.layer().map(str::to_string),
                });
                context = Some(PromptContext {
                    previous_document: e.fragment().map(str::to_string).or(last_good_doc.clone()),
                    previous_metrics: last_metrics,
                    error: Some(e.to_string()),
                    error_layer: e.layer().map(str::to_string),
                });
            }
            Attempt::Arch(arch) => {
                let doc = arch.document();
                record.arch = Some(doc.clone());
                record.params = Some(arch.report.total_params);
                record.flops = Some(arch.report.total_flops);
                match evaluator.evaluate(&arch) {
                    Ok(eval) => {
                        let score = combined_effectiveness(&eval.metrics, &cfg.criteria, &cfg.scoring);
                        record.energy_kwh = eval.energy.total();
                        record.co2_lbs = co2_lbs(record.energy_kwh);
                        if best.is_none_or(|(_, cm)| score.cm > cm) {
                            best = Some((index, score.cm));
                            record.best_so_far = true;
                            if let Some(o) = &out {
                                o.export_best(&doc)?;
                            }
                        }
                        successes += 1;
                        last_metrics = Some(eval.metrics);
                        let pretty = serde_json::to_string_pretty(&doc).expect("documents serialize");
                        last_good_doc = Some(pretty.clone());
                        context = Some(PromptContext {
                            previous_document: Some(pretty),
                            previous_metrics: Some(eval.metrics),
                            error: None,
                            error_layer: None,
                        });
                        record.score = Some(score);
                        record.eval = Some(eval);
                    }
                    Err(e) => {
                        record.failure = Some(Failure {
                            stage: FailureStage::Evaluate,
                            class: e.class().to_string(),
                            message: e.to_string(),
                            layer: None,
                        });
                        context = Some(PromptContext {
                            previous_document: last_good_doc.clone(),
                            previous_metrics: last_metrics,
                            error: Some(format!("training the architecture failed: {e}")),
                            error_layer: None,
                        });
                        if is_fatal_eval(&e) {
                            fatal = Some(Ok(e));
                        }
                    }
                }
            }
        }

        log_iteration(&record);
        totals.add(&record);
        if let Some(o) = out.as_mut() {
            o.write(&TrajectoryLine::Iteration(Box::new(record.clone())))?;
        }
        traj.records.push(record);

        if let Some(f) = fatal {
            stop_reason = match f {
                Err(_) => StopReason::BackendFatal,
                Ok(_) => StopReason::EvaluatorFatal,
            };
            let summary = summary(&traj, successes, stop_reason, best, totals);
            if let Some(o) = out.as_mut() {
                o.write(&TrajectoryLine::Summary(summary.clone()))?;
            }
            traj.summary = Some(summary);
            let trajectory = Box::new(traj);
            return Err(match f {
                Err(error) => DiscoveryError::BackendFatal {
                    iteration: index,
                    error,
                    trajectory,
                },
                Ok(error) => DiscoveryError::EvaluatorFatal {
                    iteration: index,
                    error,
                    trajectory,
                },
            });
        }

        if let (Some(target), Some((_, cm))) = (cfg.limits.target_cm, best) {
            if cm >= target {
                stop_reason = StopReason::TargetReached;
                break;
            }
        }
        if cfg.limits.budget_hours.is_some_and(|b| totals.hours >= b) {
            stop_reason = StopReason::BudgetExhausted;
            break;
        }
    }

    let summary = summary(&traj, successes, stop_reason, best, totals);
    if let Some(o) = out.as_mut() {
        o.write(&TrajectoryLine::Summary(summary.clone()))?;
    }
    info!(
        "run {} finished: {} iterations, best {:?}",
        traj.header.run_id, summary.iterations, summary.best_index
    );
    traj.summary = Some(summary);
    Ok(traj)
}

fn summary(
    traj: &RunTrajectory,
    successes: usize,
    stop_reason: StopReason,
    best: Option<(usize, f64)>,
    totals: Totals,
) -> RunSummary {
    RunSummary {
        iterations: traj.records.len(),
        successes,
        stop_reason,
        best_index: best.map(|(i, _)| i),
        best_cm: best.map(|(_, cm)| cm),
        totals,
    }
}

fn backend_class(e: &BackendError) -> &'static str {
    match e {
        BackendError::Timeout(_) => "Timeout",
        BackendError::HttpStatus(_) => "HttpStatus",
        BackendError::AuthMissing(_) => "AuthMissing",
        BackendError::ScriptExhausted(_) => "ScriptExhausted",
        BackendError::Transport(_) => "Transport",
        BackendError::BadResponse(_) => "BadResponse",
        BackendError::Config(_) => "Config",
    }
}

fn log_iteration(r: &IterationRecord) {
    match (&r.score, &r.failure) {
        (Some(s), _) => info!(
            "iteration {}: cm {:.4} params {}{}",
            r.index,
            s.cm,
            r.params.unwrap_or(0),
            if r.best_so_far { " (best)" } else { "" }
        ),
        (None, Some(f)) => info!("iteration {}: {} failure: {}", r.index, f.class, f.message),
        (None, None) => {}
    }
}
