//! Record/replay cache in front of another backend.
//!
//! Each request is keyed by a SHA-256 digest of a canonical text made of
//! the model id, the decoding parameters and the rendered prompt (or the
//! embedded text). One JSON envelope per key is stored as `<hex>.json`, so
//! fixtures diff cleanly under version control. Writes go to a temporary
//! file in the same directory and are renamed into place.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, Decoding, GatewayError, Prompt, TemplateRole};

const ENVELOPE_FORMAT: &str = "graphtune-replay";
const ENVELOPE_VERSION: u32 = 1;

/// Canonical text hashed for a completion request.
pub fn completion_key_material(model: &str, decoding: &Decoding, rendered: &str) -> String {
    format!(
        "graphtune-cache-v1\nkind:completion\nmodel:{model}\ntemperature:{:.3}\nmax_output_tokens:{}\n\n{rendered}",
        decoding.temperature, decoding.max_output_tokens
    )
}

/// Canonical text hashed for an embedding request.
pub fn embedding_key_material(model: &str, text: &str) -> String {
    format!("graphtune-cache-v1\nkind:embedding\nmodel:{model}\n\n{text}")
}

pub fn digest(material: &str) -> String {
    hex::encode(Sha256::digest(material.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CachedRequest {
    Completion { role: TemplateRole, template_id: String, temperature: f64, max_output_tokens: u32, rendered: String },
    Embedding { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachedResponse {
    Text(String),
    Embedding(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub format: String,
    pub version: u32,
    pub key: String,
    pub model: String,
    pub request: CachedRequest,
    pub response: CachedResponse,
}

pub struct ReplayBackend {
    dir: PathBuf,
    model: String,
    upstream: Option<Box<dyn Backend>>,
    upstream_calls: AtomicU64,
    tmp_counter: AtomicU64,
}

impl ReplayBackend {
    /// Replays from `dir`, falling through to `upstream` on a miss and
    /// persisting its answer.
    pub fn recording(dir: impl Into<PathBuf>, upstream: Box<dyn Backend>) -> Self {
        let model = upstream.model_id().to_string();
        ReplayBackend { dir: dir.into(), model, upstream: Some(upstream), upstream_calls: AtomicU64::new(0), tmp_counter: AtomicU64::new(0) }
    }

    /// Replays from `dir` only; a miss is [`GatewayError::CacheMiss`].
    pub fn strict(dir: impl Into<PathBuf>, model: &str) -> Self {
        ReplayBackend {
            dir: dir.into(),
            model: model.to_string(),
            upstream: None,
            upstream_calls: AtomicU64::new(0),
            tmp_counter: AtomicU64::new(0),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Requests forwarded to the upstream backend so far.
    pub fn upstream_calls(&self) -> u64 {
        self.upstream_calls.load(Ordering::Relaxed)
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn lookup(&self, key: &str) -> Result<Option<Envelope>, GatewayError> {
        let path = self.path_for(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Fatal(format!("{}: {e}", path.display()))),
        };
        let env: Envelope = serde_json::from_str(&text)
            .map_err(|e| GatewayError::ParseFailure(format!("replay file {}: {e}", path.display())))?;
        if env.format != ENVELOPE_FORMAT || env.version != ENVELOPE_VERSION || env.key != key {
            return Err(GatewayError::ParseFailure(format!("replay file {} has a foreign header", path.display())));
        }
        Ok(Some(env))
    }

    fn persist(&self, env: &Envelope) -> Result<(), GatewayError> {
        let io = |e: std::io::Error| GatewayError::Fatal(format!("replay cache {}: {e}", self.dir.display()));
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            env.key,
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_string_pretty(env).expect("envelope serializes");
        std::fs::write(&tmp, body + "\n").map_err(io)?;
        std::fs::rename(&tmp, self.path_for(&env.key)).map_err(io)
    }

    fn upstream(&self, key: &str) -> Result<&dyn Backend, GatewayError> {
        let upstream = self.upstream.as_deref().ok_or_else(|| GatewayError::CacheMiss(key.to_string()))?;
        self.upstream_calls.fetch_add(1, Ordering::Relaxed);
        Ok(upstream)
    }
}

impl Backend for ReplayBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &Prompt<'_>) -> Result<String, GatewayError> {
        let key = digest(&completion_key_material(&self.model, &prompt.decoding, prompt.rendered));
        if let Some(env) = self.lookup(&key)? {
            return match env.response {
                CachedResponse::Text(t) => Ok(t),
                CachedResponse::Embedding(_) => Err(GatewayError::ParseFailure(format!("replay entry {key} is not a completion"))),
            };
        }
        let text = self.upstream(&key)?.complete(prompt)?;
        self.persist(&Envelope {
            format: ENVELOPE_FORMAT.to_string(),
            version: ENVELOPE_VERSION,
            key: key.clone(),
            model: self.model.clone(),
            request: CachedRequest::Completion {
                role: prompt.template.role,
                template_id: prompt.template.template_id.clone(),
                temperature: prompt.decoding.temperature,
                max_output_tokens: prompt.decoding.max_output_tokens,
                rendered: prompt.rendered.to_string(),
            },
            response: CachedResponse::Text(text.clone()),
        })?;
        Ok(text)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let key = digest(&embedding_key_material(&self.model, text));
        if let Some(env) = self.lookup(&key)? {
            return match env.response {
                CachedResponse::Embedding(v) => Ok(v),
                CachedResponse::Text(_) => Err(GatewayError::ParseFailure(format!("replay entry {key} is not an embedding"))),
            };
        }
        let vector = self.upstream(&key)?.embed(text)?;
        self.persist(&Envelope {
            format: ENVELOPE_FORMAT.to_string(),
            version: ENVELOPE_VERSION,
            key: key.clone(),
            model: self.model.clone(),
            request: CachedRequest::Embedding { text: text.to_string() },
            response: CachedResponse::Embedding(vector.clone()),
        })?;
        Ok(vector)
    }
}
