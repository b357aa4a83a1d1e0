use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendConfig, BackendError, Completion, LlmBackend, PromptRecord};

/// Chat-completion client for any endpoint accepting
/// `{model, temperature, messages}`.
///
/// The reply is searched for the first assistant text in the common response
/// shapes: `choices[0].message.content`, `message.content`, and
/// `candidates[0].content.parts[0].text`.
pub struct HttpChatBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    token: Option<String>,
    timeout_secs: u64,
}

impl std::fmt::Debug for HttpChatBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpChatBackend {
    /// Resolves the auth token up front so a missing variable fails before
    /// any network traffic.
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| BackendError::Config("http_chat backend requires an endpoint".into()))?;
        let model = cfg
            .model
            .clone()
            .filter(|m| !m.is_empty())
            .ok_or_else(|| BackendError::Config("http_chat backend requires a model".into()))?;
        let token = match cfg.auth_env.as_deref().filter(|v| !v.is_empty()) {
            None => None,
            Some(var) => match std::env::var(var) {
                Ok(t) if !t.is_empty() => Some(t),
                _ => return Err(BackendError::AuthMissing(var.to_string())),
            },
        };
        let timeout_secs = cfg.timeout_secs.max(1);
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpChatBackend {
            agent,
            endpoint,
            model,
            token,
            timeout_secs,
        })
    }

    pub fn request_body(&self, p: &PromptRecord) -> Value {
        json!({
            "model": self.model,
            "temperature": p.temperature,
            "messages": [
                {"role": "system", "content": p.system_text},
                {"role": "user", "content": p.user_text},
            ],
        })
    }
}

pub(crate) fn assistant_text(body: &Value) -> Option<&str> {
    let candidates = [
        body.pointer("/choices/0/message/content"),
        body.pointer("/message/content"),
        body.pointer("/candidates/0/content/parts/0/text"),
    ];
    candidates.into_iter().flatten().find_map(Value::as_str)
}

impl LlmBackend for HttpChatBackend {
    fn complete(&mut self, p: &PromptRecord) -> Result<Completion, BackendError> {
        let started = Instant::now();
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let body = self.request_body(p);
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout_secs),
            other => BackendError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::HttpStatus(status));
        }
        let value: Value = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout_secs),
            other => BackendError::BadResponse(other.to_string()),
        })?;
        let text = assistant_text(&value)
            .ok_or_else(|| BackendError::BadResponse("no assistant text in response".into()))?;
        Ok(Completion {
            text: text.to_string(),
            elapsed_hours: started.elapsed().as_secs_f64() / 3600.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_assistant_text_in_known_shapes() {
        let openai = json!({"choices": [{"message": {"role": "assistant", "content": "a"}}]});
        let ollama = json!({"message": {"role": "assistant", "content": "b"}});
        let gemini = json!({"candidates": [{"content": {"parts": [{"text": "c"}]}}]});
        assert_eq!(assistant_text(&openai), Some("a"));
        assert_eq!(assistant_text(&ollama), Some("b"));
        assert_eq!(assistant_text(&gemini), Some("c"));
        assert_eq!(assistant_text(&json!({"error": "x"})), None);
    }

    #[test]
    fn missing_token_fails_before_network() {
        let cfg = BackendConfig {
            kind: super::super::BackendKind::HttpChat,
            endpoint: Some("http://127.0.0.1:9/v1/chat/completions".into()),
            model: Some("m".into()),
            auth_env: Some("ARCHDISCO_TEST_TOKEN_THAT_IS_NOT_SET".into()),
            ..Default::default()
        };
        assert_eq!(
            HttpChatBackend::new(&cfg).unwrap_err(),
            BackendError::AuthMissing("ARCHDISCO_TEST_TOKEN_THAT_IS_NOT_SET".into())
        );
    }

    #[test]
    fn debug_output_redacts_token() {
        std::env::set_var("ARCHDISCO_TEST_TOKEN_REDACT", "sekrit");
        let cfg = BackendConfig {
            kind: super::super::BackendKind::HttpChat,
            endpoint: Some("http://127.0.0.1:9/".into()),
            model: Some("m".into()),
            auth_env: Some("ARCHDISCO_TEST_TOKEN_REDACT".into()),
            ..Default::default()
        };
        let b = HttpChatBackend::new(&cfg).unwrap();
        assert!(!format!("{b:?}").contains("sekrit"));
    }
}
