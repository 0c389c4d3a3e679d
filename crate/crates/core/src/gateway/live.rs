//! OpenAI-compatible HTTP backend.
//!
//! Configured from `GT_LLM_BASE_URL`, `GT_LLM_MODEL`, `GT_LLM_API_KEY` and
//! `GT_EMBED_MODEL`. Refuses to start when `GT_OFFLINE=1`.

use std::time::Duration;

use serde_json::{json, Value};

use super::{offline_mode, Backend, GatewayError, Prompt};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_EMBED_MODEL: &str = "text-embedding-3-small";

#[derive(Debug, Clone, PartialEq)]
pub struct LiveSettings {
    pub base_url: String,
    pub model: String,
    pub embed_model: String,
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl LiveSettings {
    pub fn from_env() -> Result<Self, GatewayError> {
        let var = |k: &str| std::env::var(k).ok().map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        let model = var("GT_LLM_MODEL").ok_or_else(|| GatewayError::Fatal("GT_LLM_MODEL is not set".into()))?;
        Ok(LiveSettings {
            base_url: var("GT_LLM_BASE_URL").unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            model,
            embed_model: var("GT_EMBED_MODEL").unwrap_or_else(|| DEFAULT_EMBED_MODEL.to_string()),
            api_key: var("GT_LLM_API_KEY"),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        })
    }
}

pub struct LiveBackend {
    settings: LiveSettings,
    agent: ureq::Agent,
    model_key: String,
}

impl LiveBackend {
    pub fn new(settings: LiveSettings) -> Result<Self, GatewayError> {
        if offline_mode() {
            return Err(GatewayError::Fatal("live backend requested but GT_OFFLINE=1".into()));
        }
        let config = ureq::Agent::config_builder().timeout_global(Some(settings.timeout)).http_status_as_error(false).build();
        let model_key = format!("{}|{}", settings.model, settings.embed_model);
        Ok(LiveBackend { settings, agent: config.into(), model_key })
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        Self::new(LiveSettings::from_env()?)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}/{}", self.settings.base_url.trim_end_matches('/'), path);
        let mut last = GatewayError::Transient("no attempt made".into());
        for attempt in 0..self.settings.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.settings.initial_backoff * 2u32.pow(attempt - 1));
            }
            match self.post_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(e @ GatewayError::Transient(_)) => {
                    log::warn!("attempt {} of {} to {url} failed: {e}", attempt + 1, self.settings.max_attempts);
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, GatewayError> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.settings.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| GatewayError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| GatewayError::Transient(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| GatewayError::ParseFailure(e.to_string())),
            408 | 429 | 500..=599 => Err(GatewayError::Transient(format!("HTTP {status}: {text}"))),
            _ => Err(GatewayError::Fatal(format!("HTTP {status}: {text}"))),
        }
    }
}

/// `choices[0].message.content` of a chat-completions response.
pub fn parse_chat_response(value: &Value) -> Result<String, GatewayError> {
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::ParseFailure("response has no choices[0].message.content".into()))
}

/// `data[0].embedding` of an embeddings response.
pub fn parse_embedding_response(value: &Value) -> Result<Vec<f64>, GatewayError> {
    value
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
        .ok_or_else(|| GatewayError::ParseFailure("response has no data[0].embedding".into()))
}

impl Backend for LiveBackend {
    fn model_id(&self) -> &str {
        &self.model_key
    }

    fn complete(&self, prompt: &Prompt<'_>) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt.rendered}],
            "temperature": prompt.decoding.temperature,
            "max_tokens": prompt.decoding.max_output_tokens,
        });
        parse_chat_response(&self.post("chat/completions", &body)?)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let body = json!({"model": self.settings.embed_model, "input": text});
        parse_embedding_response(&self.post("embeddings", &body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_openai_shapes() {
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "Paris"}}]});
        assert_eq!(parse_chat_response(&chat).unwrap(), "Paris");
        assert!(matches!(parse_chat_response(&json!({"choices": []})), Err(GatewayError::ParseFailure(_))));
        let emb = json!({"data": [{"embedding": [0.5, -0.25]}]});
        assert_eq!(parse_embedding_response(&emb).unwrap(), vec![0.5, -0.25]);
        assert!(parse_embedding_response(&json!({"data": [{"embedding": ["x"]}]})).is_err());
    }
}
