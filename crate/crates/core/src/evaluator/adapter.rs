use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::protocol::{encode_line, AdapterRequest, RequestConfig, SessionParser, Terminal};
use super::{resolve_energy, E1Phase, EvalConfig, EvalError, EvalResult, Evaluator};
use crate::llm::ValidatedArch;
use crate::metrics::MetricsRecord;
use crate::scoring::PowerProfile;

/// Kills and reaps the child on every exit path.
struct ChildGuard(Option<Child>);

impl ChildGuard {
    /// Wait briefly for a clean exit, then fall back to killing.
    fn finish(mut self) -> Option<std::process::ExitStatus> {
        let mut child = self.0.take()?;
        let deadline = Instant::now() + Duration::from_secs(5);
        while Instant::now() < deadline {
            match child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(_) => break,
            }
        }
        let _ = child.kill();
        child.wait().ok()
    }
}

impl Drop for ChildGuard {
    fn drop(&mut self) {
        if let Some(mut child) = self.0.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Launch `<command> serve`, send one `evaluate` request and wait for the
/// terminal message.
pub fn evaluate_adapter(
    arch: &ValidatedArch,
    cfg: &EvalConfig,
    power: &PowerProfile,
) -> Result<EvalResult, EvalError> {
    let (program, args) = cfg
        .command
        .split_first()
        .ok_or_else(|| EvalError::Config("adapter mode requires a launch command".into()))?;

    let mut child = Command::new(program)
        .args(args)
        .arg("serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EvalError::AdapterLaunchFailed(format!("{program}: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let stderr = child.stderr.take().expect("piped stderr");
    let guard = ChildGuard(Some(child));

    let (tx, rx) = mpsc::channel::<std::io::Result<String>>();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let failed = line.is_err();
            if tx.send(line).is_err() || failed {
                break;
            }
        }
    });
    let stderr_tail = thread::spawn(move || {
        let mut tail: Vec<String> = Vec::new();
        for line in BufReader::new(stderr).lines().map_while(Result::ok) {
            debug!(target: "adapter", "{line}");
            if tail.len() == 20 {
                tail.remove(0);
            }
            tail.push(line);
        }
        tail
    });

    let request = AdapterRequest::Evaluate {
        arch: arch.document(),
        config: RequestConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            dataset: cfg.dataset.clone(),
            augment: cfg.augment,
        },
    };
    // A child that dies before reading surfaces as end-of-stream below.
    if let Err(e) = stdin.write_all(encode_line(&request).as_bytes()) {
        debug!("adapter stdin write failed: {e}");
    }
    drop(stdin);

    let deadline = Instant::now() + Duration::from_secs(cfg.timeout_secs);
    let mut parser = SessionParser::new();
    let terminal = loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(remaining) {
            Ok(Ok(line)) => {
                if let Some(t) = parser.push(&line)? {
                    break t;
                }
            }
            Ok(Err(e)) => {
                return Err(EvalError::ProtocolViolation {
                    line: parser.lines_seen() + 1,
                    message: format!("unreadable output: {e}"),
                })
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {
                return Err(EvalError::AdapterTimeout(cfg.timeout_secs));
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                let status = guard.finish();
                let tail = stderr_tail.join().unwrap_or_default();
                return Err(EvalError::ProtocolViolation {
                    line: parser.lines_seen() + 1,
                    message: format!(
                        "adapter output ended before a result (exit: {}){}",
                        status.map_or("unknown".to_string(), |s| s.to_string()),
                        if tail.is_empty() {
                            String::new()
                        } else {
                            format!("; stderr: {}", tail.join(" | "))
                        }
                    ),
                });
            }
        }
    };

    let status = guard.finish();
    let metrics = match terminal {
        Terminal::Error(message) => return Err(EvalError::AdapterReportedError(message)),
        Terminal::Result(m) => m,
    };
    if let Some(status) = status.filter(|s| !s.success()) {
        warn!("adapter exited with {status} after reporting a result");
    }
    if metrics.params != arch.report.total_params {
        warn!(
            "adapter built {} parameters, architecture counts {}",
            metrics.params, arch.report.total_params
        );
    }

    let train_eval_hours = metrics.train_eval_hours.unwrap_or(0.0);
    let e1_phase = if cfg.e1_phase == E1Phase::TrainEval
        && metrics.train_eval_hours.is_none()
        && metrics.e1_kwh.is_none()
    {
        warn!("adapter did not report train_eval_hours; E1 falls back to the training phase");
        E1Phase::Train
    } else {
        cfg.e1_phase
    };
    let (energy, e1, e2, energy_source) = resolve_energy(
        metrics.train_hours,
        train_eval_hours,
        metrics.eval_hours,
        metrics.e1_kwh,
        metrics.e2_kwh,
        e1_phase,
        power,
    );
    Ok(EvalResult {
        metrics: MetricsRecord {
            a1: metrics.a1,
            a2: metrics.a2,
            e1,
            e2,
            f: metrics.fps,
            p: metrics.params,
        },
        train_hours: metrics.train_hours,
        train_eval_hours,
        eval_hours: metrics.eval_hours,
        energy,
        energy_source,
        hardware_tag: cfg.hardware_tag.clone(),
        transcript: parser.transcript,
    })
}

#[derive(Debug, Clone)]
pub struct AdapterEvaluator {
    cfg: EvalConfig,
    power: PowerProfile,
}

impl AdapterEvaluator {
    pub fn new(cfg: EvalConfig, power: PowerProfile) -> Self {
        AdapterEvaluator { cfg, power }
    }
}

impl Evaluator for AdapterEvaluator {
    fn evaluate(&mut self, arch: &ValidatedArch) -> Result<EvalResult, EvalError> {
        evaluate_adapter(arch, &self.cfg, &self.power)
    }
}
