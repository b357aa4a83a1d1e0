//! Minimal trainer adapter for exercising the protocol. Reads one evaluate
//! request from stdin and answers according to `--mode`.

use std::io::{BufRead, Write};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};

use archdisco::arch_ir::count_params;
use archdisco::evaluator::protocol::{encode_line, AdapterMessage, AdapterMetrics, AdapterRequest};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Progress lines then a result.
    Ok,
    /// A non-JSON line before any result.
    Garbage,
    /// An error message.
    Error,
    /// Exit without output.
    Crash,
    /// Never answer.
    Hang,
}

#[derive(Debug, Parser)]
struct Args {
    #[arg(long, value_enum, default_value = "ok")]
    mode: Mode,
    #[arg(long, default_value_t = 0.6)]
    a1: f64,
    #[arg(long, default_value_t = 0.55)]
    a2: f64,
    #[arg(long, default_value_t = 0.5)]
    train_hours: f64,
    #[arg(long, default_value_t = 0.01)]
    eval_hours: f64,
    #[arg(long)]
    train_eval_hours: Option<f64>,
    #[arg(long, default_value_t = 1200.0)]
    fps: f64,
    #[arg(long)]
    e1_kwh: Option<f64>,
    #[arg(long)]
    e2_kwh: Option<f64>,
    /// Report this parameter count instead of counting the request's architecture.
    #[arg(long)]
    params: Option<u64>,
    #[arg(long, default_value_t = 2)]
    epochs_reported: u32,
    /// Must be `serve`.
    command: String,
}

fn say(out: &mut impl Write, msg: &AdapterMessage) {
    let _ = out.write_all(encode_line(msg).as_bytes());
    let _ = out.flush();
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.command != "serve" {
        eprintln!("unknown command {}", args.command);
        return ExitCode::from(2);
    }
    let mut line = String::new();
    if std::io::stdin().lock().read_line(&mut line).is_err() {
        return ExitCode::from(3);
    }
    let req: AdapterRequest = match serde_json::from_str(&line) {
        Ok(r) => r,
        Err(e) => {
            let mut out = std::io::stdout().lock();
            say(&mut out, &AdapterMessage::Error { message: format!("bad request: {e}") });
            return ExitCode::from(1);
        }
    };
    let AdapterRequest::Evaluate { arch, .. } = req;

    let mut out = std::io::stdout().lock();
    match args.mode {
        Mode::Crash => {
            eprintln!("stub adapter: simulated crash");
            ExitCode::from(101)
        }
        Mode::Hang => loop {
            std::thread::sleep(Duration::from_secs(60));
        },
        Mode::Garbage => {
            let _ = writeln!(out, "Epoch 1/20 - loss: 2.30");
            let _ = out.flush();
            ExitCode::SUCCESS
        }
        Mode::Error => {
            say(
                &mut out,
                &AdapterMessage::Error {
                    message: "CUDA out of memory".into(),
                },
            );
            ExitCode::SUCCESS
        }
        Mode::Ok => {
            let params = match args.params {
                Some(p) => p,
                None => {
                    let text = arch.to_string();
                    match archdisco::arch_ir::parse_arch(&text).and_then(|g| count_params(&g)) {
                        Ok(p) => p,
                        Err(e) => {
                            say(&mut out, &AdapterMessage::Error { message: e.to_string() });
                            return ExitCode::SUCCESS;
                        }
                    }
                }
            };
            for epoch in 1..=args.epochs_reported {
                let frac = f64::from(epoch) / f64::from(args.epochs_reported);
                say(
                    &mut out,
                    &AdapterMessage::Progress {
                        epoch,
                        train_acc: args.a1 * frac,
                        val_acc: args.a2 * frac,
                    },
                );
            }
            say(
                &mut out,
                &AdapterMessage::Result {
                    metrics: AdapterMetrics {
                        a1: args.a1,
                        a2: args.a2,
                        e1_kwh: args.e1_kwh,
                        e2_kwh: args.e2_kwh,
                        train_hours: args.train_hours,
                        eval_hours: args.eval_hours,
                        fps: args.fps,
                        params,
                        train_eval_hours: args.train_eval_hours,
                    },
                },
            );
            ExitCode::SUCCESS
        }
    }
}
