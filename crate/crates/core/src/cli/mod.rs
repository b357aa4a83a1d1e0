//! Command-line front end. Exit codes: 0 success, 1 domain error (invalid
//! architecture, failed run, divergent replay), 2 usage or configuration
//! error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::arch_ir::{parse_arch, ArchError};
use crate::discovery::{
    best_arch_path, config_from_overrides, load_config, preset_toml, replay, run_discovery,
    trajectory_path, DiscoveryError, IterationRecord, LoopConfig, Overrides, ReplayError,
    RunOptions, RunTrajectory,
};
use crate::evaluator::{open_evaluator, EvalMode};
use crate::expert::{generate_instructions, resolve_conflicts};
use crate::llm::{open_backend, BackendKind, ValidatedArch};
use crate::metrics::MetricsRecord;
use crate::scoring::{co2_lbs, combined_effectiveness, energy_kwh_pue, ScoringWeights};

#[derive(Debug, Parser)]
#[command(name = "archdisco", version, about = "LLM-guided neural architecture discovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the discovery loop.
    Discover(DiscoverArgs),
    /// Parse an architecture document and print its shapes and parameter count.
    Validate { arch: PathBuf },
    /// Combined effectiveness of a metrics record.
    Score {
        metrics: PathBuf,
        #[command(flatten)]
        criteria: CriteriaArgs,
    },
    /// Instructions the expert system derives from a metrics record.
    Instruct {
        metrics: PathBuf,
        #[command(flatten)]
        criteria: CriteriaArgs,
    },
    /// Energy (kWh-PUE) and CO2 (lbs) for a duration under the configured power profile.
    Energy {
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-derive every score and decision of a recorded run.
    Replay {
        trajectory: PathBuf,
        /// Score with the `[scoring]` weights of this config instead of the recorded ones.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a bundled experiment setting as a TOML config.
    Preset { n: u32 },
    /// Evaluate one architecture with the configured trainer.
    Retrain {
        arch: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CriteriaArgs {
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<u32>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// http_chat or scripted.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Scripted responses: a directory of NNN.txt files or a .jsonl file.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<u32>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Output directory for the trajectory and best architecture.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed run id instead of a generated one.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Usage(String),
    /// Exit code 1.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Domain(format!("write failed: {e}"))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn loop_config(config: Option<&Path>, o: &Overrides) -> Result<LoopConfig, CliError> {
    match config {
        Some(p) => load_config(p, o).map_err(usage),
        None => config_from_overrides(o).map_err(usage),
    }
}

fn criteria_config(args: &CriteriaArgs) -> Result<LoopConfig, CliError> {
    let o = Overrides {
        preset: args.preset,
        ..Default::default()
    };
    loop_config(args.config.as_deref(), &o)
}

fn read_metrics(path: &Path) -> Result<MetricsRecord, CliError> {
    let m: MetricsRecord = serde_json::from_str(&read(path)?)
        .map_err(|e| usage(format!("invalid metrics {}: {e}", path.display())))?;
    m.validate().map_err(usage)?;
    Ok(m)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Discover(args) => discover(args, out),
        Command::Validate { arch } => validate(&arch, out),
        Command::Score { metrics, criteria } => {
            let m = read_metrics(&metrics)?;
            let cfg = criteria_config(&criteria)?;
            let s = combined_effectiveness(&m, &cfg.criteria, &cfg.scoring);
            for (name, v) in [
                ("cm", s.cm),
                ("ta", s.ta),
                ("va", s.va),
                ("nf", s.nf),
                ("t_ne", s.t_ne),
                ("v_ne", s.v_ne),
            ] {
                writeln!(out, "{name}={v:?}").map_err(io_err)?;
            }
            writeln!(
                out,
                "weights aw={:?} fw={:?} ew={:?}",
                s.weights.aw, s.weights.fw, s.weights.ew
            )
            .map_err(io_err)
        }
        Command::Instruct { metrics, criteria } => {
            let m = read_metrics(&metrics)?;
            let cfg = criteria_config(&criteria)?;
            let rc = resolve_conflicts(&generate_instructions(&m, &cfg.criteria));
            if rc.is_empty() {
                writeln!(out, "(no instructions)").map_err(io_err)?;
            }
            for wi in rc.iter() {
                writeln!(out, "{} {} {}", wi.code.code(), wi.weight, wi.code.description())
                    .map_err(io_err)?;
            }
            Ok(())
        }
        Command::Energy { hours, config } => {
            if !hours.is_finite() || hours < 0.0 {
                return Err(usage("--hours must be finite and >= 0"));
            }
            let cfg = loop_config(config.as_deref(), &Overrides::default())?;
            let kwh = energy_kwh_pue(hours, &cfg.power);
            writeln!(out, "energy_kwh_pue: {kwh}").map_err(io_err)?;
            writeln!(out, "co2_lbs: {}", co2_lbs(kwh)).map_err(io_err)
        }
        Command::Replay { trajectory, config } => {
            let weights: Option<ScoringWeights> = match config {
                Some(p) => Some(load_config(&p, &Overrides::default()).map_err(usage)?.scoring),
                None => None,
            };
            match replay(&trajectory, weights) {
                Ok(r) => {
                    writeln!(
                        out,
                        "replayed {} iterations: no divergence (best iteration {})",
                        r.trajectory.records.len(),
                        r.best_index.map_or("none".to_string(), |i| i.to_string())
                    )
                    .map_err(io_err)?;
                    if r.truncated {
                        writeln!(out, "note: final line was truncated and ignored").map_err(io_err)?;
                    }
                    Ok(())
                }
                Err(e @ ReplayError::Io { .. }) => Err(usage(e)),
                Err(e) => Err(domain(e)),
            }
        }
        Command::Preset { n } => {
            let text = preset_toml(n).map_err(usage)?;
            out.write_all(text.as_bytes()).map_err(io_err)
        }
        Command::Retrain { arch, config } => retrain(&arch, config.as_deref(), out),
    }
}

fn load_arch(path: &Path) -> Result<ValidatedArch, CliError> {
    let text = read(path)?;
    let graph = parse_arch(&text).map_err(|e| match e {
        ArchError::MalformedDocument { .. } => usage(e),
        _ => domain(e),
    })?;
    ValidatedArch::from_graph(graph).map_err(domain)
}

fn validate(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let arch = load_arch(path)?;
    let shape_width = arch
        .report
        .shapes
        .values()
        .map(|s| s.to_string().len())
        .max()
        .unwrap_or(0)
        .max(5);
    let id_width = arch.graph.layers().iter().map(|l| l.id.len()).max().unwrap_or(0).max(5);
    writeln!(
        out,
        "{:<id_width$}  {:<17}  {:<shape_width$}  params",
        "layer", "kind", "shape"
    )
    .map_err(io_err)?;
    for layer in arch.graph.topological_order() {
        let shape = arch.report.shapes[&layer.id].to_string();
        let params = arch.report.layer_params.get(&layer.id).copied().unwrap_or(0);
        writeln!(
            out,
            "{:<id_width$}  {:<17}  {:<shape_width$}  {}",
            layer.id,
            layer.kind.name(),
            shape,
            params
        )
        .map_err(io_err)?;
    }
    writeln!(out, "params: {}", arch.report.total_params).map_err(io_err)?;
    writeln!(out, "flops: {}", arch.report.total_flops).map_err(io_err)
}

fn retrain(path: &Path, config: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = loop_config(config, &Overrides::default())?;
    let arch = load_arch(path)?;
    if cfg.trainer.mode == EvalMode::Surrogate {
        log::warn!("trainer mode is surrogate; metrics are estimates, not training results");
    }
    let mut evaluator = open_evaluator(&cfg.trainer, &cfg.power).map_err(usage)?;
    let r = evaluator.evaluate(&arch).map_err(domain)?;
    let text = serde_json::to_string_pretty(&r.metrics).expect("metrics serialize");
    writeln!(out, "{text}").map_err(io_err)
}

fn status_line(r: &IterationRecord) -> String {
    match (&r.eval, &r.score, &r.failure) {
        (Some(e), Some(s), _) => {
            let m = &e.metrics;
            format!(
                "iter {:>3}  valid    a1 {:.4}  a2 {:.4}  fps {:>12.1}  e1 {:.6}  cm {:>8.4}{}",
                r.index,
                m.a1,
                m.a2,
                m.f,
                m.e1,
                s.cm,
                if r.best_so_far { "  best" } else { "" }
            )
        }
        (_, _, Some(f)) => {
            let at = f.layer.as_ref().map(|l| format!(" at layer {l}")).unwrap_or_default();
            format!("iter {:>3}  invalid  {}{at}", r.index, f.class)
        }
        _ => format!("iter {:>3}", r.index),
    }
}

fn print_run(t: &RunTrajectory, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    for r in &t.records {
        writeln!(out, "{}", status_line(r)).map_err(io_err)?;
    }
    let totals = t.totals();
    let best = t.best().and_then(|b| Some((b, b.eval.as_ref()?)));
    let row = match best {
        Some((b, e)) => format!(
            "best iter {}  accuracy {:.4}  params {}  hours {:.4}  kWh-PUE {:.4}  CO2 lbs {:.4}  fps {:.1}",
            b.index, e.metrics.a2, e.metrics.p, totals.hours, totals.energy_kwh, totals.co2_lbs, e.metrics.f
        ),
        None => format!(
            "no valid architecture  hours {:.4}  kWh-PUE {:.4}  CO2 lbs {:.4}",
            totals.hours, totals.energy_kwh, totals.co2_lbs
        ),
    };
    writeln!(out, "summary  iterations {}  {row}", t.records.len()).map_err(io_err)?;
    let id = &t.header.run_id;
    writeln!(out, "trajectory: {}", trajectory_path(dir, id).display()).map_err(io_err)?;
    if best.is_some() {
        writeln!(out, "best architecture: {}", best_arch_path(dir, id).display()).map_err(io_err)?;
    }
    Ok(())
}

fn discover(args: DiscoverArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let overrides = Overrides {
        backend: args.backend,
        script: args.script.clone(),
        preset: args.preset,
        max_iterations: args.max_iterations,
        temperature: args.temperature,
        seed: args.seed,
    };
    let cfg = loop_config(args.config.as_deref(), &overrides)?;
    for w in cfg.validate().map_err(usage)? {
        log::warn!("{w}");
    }
    let mut backend = open_backend(&cfg.backend).map_err(usage)?;
    let mut evaluator = open_evaluator(&cfg.trainer, &cfg.power).map_err(usage)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| usage(format!("cannot create {}: {e}", args.out.display())))?;
    let opts = RunOptions {
        run_id: args.run_id.unwrap_or_else(crate::discovery::new_run_id),
        out_dir: Some(args.out.clone()),
    };
    match run_discovery(&cfg, &mut backend, &mut evaluator, &opts) {
        Ok(t) => print_run(&t, &args.out, out),
        Err(e) => {
            if let Some(t) = e.partial_trajectory() {
                print_run(t, &args.out, out)?;
            }
            Err(match e {
                DiscoveryError::Config(_) | DiscoveryError::RunExists(_) => usage(e),
                _ => domain(e),
            })
        }
    }
}
