use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{BackendError, Completion, LlmBackend, PromptRecord};

/// Replays canned responses: call `n` returns entry `n`.
///
/// A script is either a directory of `000.txt`, `001.txt`, ... files or a
/// JSONL file with one response per line (a JSON string or an object with a
/// `response` field).
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: BTreeMap<usize, String>,
    calls: usize,
}

impl ScriptedBackend {
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            responses: responses.into_iter().map(Into::into).enumerate().collect(),
            calls: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let cfg_err = |msg: String| BackendError::Config(msg);
        if path.is_dir() {
            let mut responses = BTreeMap::new();
            let entries = fs::read_dir(path)
                .map_err(|e| cfg_err(format!("cannot read script dir {}: {e}", path.display())))?;
            for entry in entries {
                let entry = entry.map_err(|e| cfg_err(e.to_string()))?;
                let name = entry.file_name();
                let name = name.to_string_lossy();
                let Some(stem) = name.strip_suffix(".txt") else {
                    continue;
                };
                let Ok(index) = stem.parse::<usize>() else {
                    continue;
                };
                let text = fs::read_to_string(entry.path())
                    .map_err(|e| cfg_err(format!("cannot read {}: {e}", entry.path().display())))?;
                responses.insert(index, text);
            }
            Ok(ScriptedBackend { responses, calls: 0 })
        } else {
            let text = fs::read_to_string(path)
                .map_err(|e| cfg_err(format!("cannot read script {}: {e}", path.display())))?;
            let mut responses = Vec::new();
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let value: Value = serde_json::from_str(line)
                    .map_err(|e| cfg_err(format!("{}:{}: {e}", path.display(), n + 1)))?;
                let response = match value {
                    Value::String(s) => s,
                    Value::Object(mut m) => match m.remove("response") {
                        Some(Value::String(s)) => s,
                        _ => {
                            return Err(cfg_err(format!(
                                "{}:{}: object lines need a string 'response' field",
                                path.display(),
                                n + 1
                            )))
                        }
                    },
                    _ => {
                        return Err(cfg_err(format!(
                            "{}:{}: expected a JSON string or object",
                            path.display(),
                            n + 1
                        )))
                    }
                };
                responses.push(response);
            }
            Ok(Self::from_responses(responses))
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn response(&self, index: usize) -> Result<&str, BackendError> {
        self.responses
            .get(&index)
            .map(String::as_str)
            .ok_or(BackendError::ScriptExhausted(index))
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&mut self, _prompt: &PromptRecord) -> Result<Completion, BackendError> {
        let text = self.response(self.calls)?.to_string();
        self.calls += 1;
        Ok(Completion {
            text,
            elapsed_hours: 0.0,
        })
    }
}
