//! Prompting, backend calls and architecture extraction.

mod extract;
mod http;
mod prompt;
mod scripted;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_arch, find_document, ExtractError, ValidatedArch};
pub use http::HttpChatBackend;
pub use prompt::{build_prompt, PromptContext, PROMPT_TEMPLATE_VERSION};
pub use scripted::ScriptedBackend;

/// What the generated network must solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub dataset: String,
    pub input_shape: [u64; 3],
    pub num_classes: u64,
    /// Free text appended to every prompt.
    #[serde(default)]
    pub constraints: String,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            dataset: "cifar10".into(),
            input_shape: [32, 32, 3],
            num_classes: 10,
            constraints: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Scripted,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http_chat" => Ok(BackendKind::HttpChat),
            "scripted" => Ok(BackendKind::Scripted),
            other => Err(format!("unknown backend '{other}' (http_chat|scripted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token. Empty or
    /// absent means no Authorization header is sent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Extra attempts inside one iteration when the response cannot be used.
    #[serde(default)]
    pub max_retries: u32,
    /// Directory of `NNN.txt` files or a `.jsonl` file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

fn default_timeout_secs() -> u64 {
    120
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model: None,
            auth_env: None,
            temperature: 0.0,
            timeout_secs: default_timeout_secs(),
            max_retries: 0,
            script: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!(
                "backend temperature {} outside [0, 2]",
                self.temperature
            ));
        }
        match self.kind {
            BackendKind::HttpChat => {
                if self.endpoint.as_deref().unwrap_or("").is_empty() {
                    return Err("http_chat backend requires an endpoint".into());
                }
                if self.model.as_deref().unwrap_or("").is_empty() {
                    return Err("http_chat backend requires a model".into());
                }
                if self.timeout_secs == 0 {
                    return Err("backend timeout_secs must be >= 1".into());
                }
            }
            BackendKind::Scripted => {
                if self.script.is_none() {
                    return Err("scripted backend requires a script path".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend request timed out after {0} s")]
    Timeout(u64),
    #[error("backend returned HTTP status {0}")]
    HttpStatus(u16),
    #[error("auth token environment variable {0} is not set")]
    AuthMissing(String),
    #[error("script has no response for call {0}")]
    ScriptExhausted(usize),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unusable backend response: {0}")]
    BadResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Fatal errors abort the run; the rest fail only the current iteration.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            BackendError::AuthMissing(_) | BackendError::ScriptExhausted(_) | BackendError::Config(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Time spent generating, in hours. Zero for the scripted backend.
    pub elapsed_hours: f64,
}

pub trait LlmBackend {
    fn complete(&mut self, prompt: &PromptRecord) -> Result<Completion, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&mut self, prompt: &PromptRecord) -> Result<Completion, BackendError> {
        (**self).complete(prompt)
    }
}

pub fn open_backend(cfg: &BackendConfig) -> Result<Box<dyn LlmBackend>, BackendError> {
    cfg.validate().map_err(BackendError::Config)?;
    Ok(match cfg.kind {
        BackendKind::HttpChat => Box::new(HttpChatBackend::new(cfg)?),
        BackendKind::Scripted => {
            let path = cfg.script.as_ref().expect("validated");
            Box::new(ScriptedBackend::load(path)?)
        }
    })
}

/// One-shot call: open the configured backend and send a single prompt.
/// Scripted backends answer with the entry for `p.iteration`.
pub fn complete(cfg: &BackendConfig, p: &PromptRecord) -> Result<String, BackendError> {
    cfg.validate().map_err(BackendError::Config)?;
    match cfg.kind {
        BackendKind::Scripted => {
            let path = cfg.script.as_ref().expect("validated");
            ScriptedBackend::load(path)?.response(p.iteration).map(str::to_string)
        }
        BackendKind::HttpChat => HttpChatBackend::new(cfg)?.complete(p).map(|c| c.text),
    }
}
