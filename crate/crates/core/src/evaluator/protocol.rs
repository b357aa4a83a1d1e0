//! Line-delimited JSON protocol spoken with trainer adapters.
//!
//! ```text
//! -> {"type":"evaluate","arch":{...},"config":{"epochs":N,"batch_size":B,"dataset":"...","augment":false}}
//! <- {"type":"progress","epoch":k,"train_acc":x,"val_acc":y}        (zero or more)
//! <- {"type":"result","metrics":{...}} | {"type":"error","message":"..."}
//! ```

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestConfig {
    pub epochs: u32,
    pub batch_size: u32,
    pub dataset: String,
    pub augment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdapterRequest {
    Evaluate { arch: Value, config: RequestConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterMetrics {
    pub a1: f64,
    pub a2: f64,
    pub e1_kwh: Option<f64>,
    pub e2_kwh: Option<f64>,
    pub train_hours: f64,
    pub eval_hours: f64,
    pub fps: f64,
    #[serde(deserialize_with = "integral")]
    pub params: u64,
    /// Time spent re-evaluating the training set, when the adapter measures it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_eval_hours: Option<f64>,
}

/// Accepts `448` as well as `448.0`.
fn integral<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    let v = serde_json::Number::deserialize(d)?;
    if let Some(n) = v.as_u64() {
        return Ok(n);
    }
    match v.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f <= 2f64.powi(53) => Ok(f as u64),
        _ => Err(serde::de::Error::custom(format!(
            "params must be a non-negative integer, got {v}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdapterMessage {
    Progress {
        epoch: u32,
        train_acc: f64,
        val_acc: f64,
    },
    Result {
        metrics: AdapterMetrics,
    },
    Error {
        message: String,
    },
}

impl AdapterMetrics {
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [("a1", self.a1), ("a2", self.a2)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        let mut nonneg = vec![
            ("train_hours", self.train_hours),
            ("eval_hours", self.eval_hours),
        ];
        nonneg.extend(self.e1_kwh.map(|v| ("e1_kwh", v)));
        nonneg.extend(self.e2_kwh.map(|v| ("e2_kwh", v)));
        nonneg.extend(self.train_eval_hours.map(|v| ("train_eval_hours", v)));
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(format!("fps = {} must be finite and > 0", self.fps));
        }
        Ok(())
    }
}

/// How a session ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    Result(AdapterMetrics),
    Error(String),
}

/// Incremental parser for the adapter's output stream.
#[derive(Debug, Default)]
pub struct SessionParser {
    lines: usize,
    pub progress: Vec<(u32, f64, f64)>,
    pub transcript: Vec<String>,
}

impl SessionParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lines_seen(&self) -> usize {
        self.lines
    }

    /// Feed one line; returns the terminal message once it arrives.
    pub fn push(&mut self, line: &str) -> Result<Option<Terminal>, EvalError> {
        self.lines += 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            return Ok(None);
        }
        self.transcript.push(line.to_string());
        let violation = |message: String| EvalError::ProtocolViolation {
            line: self.lines,
            message,
        };
        let msg: AdapterMessage = serde_json::from_str(line).map_err(|e| violation(e.to_string()))?;
        match msg {
            AdapterMessage::Progress {
                epoch,
                train_acc,
                val_acc,
            } => {
                self.progress.push((epoch, train_acc, val_acc));
                Ok(None)
            }
            AdapterMessage::Result { metrics } => {
                metrics.check().map_err(violation)?;
                Ok(Some(Terminal::Result(metrics)))
            }
            AdapterMessage::Error { message } => Ok(Some(Terminal::Error(message))),
        }
    }
}

pub fn encode_line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol messages serialize");
    s.push('\n');
    s
}
