//! The single boundary for model calls.
//!
//! Extraction, summarization, answering, grading and embedding all go
//! through [`Gateway`], which renders a registered template and hands the
//! request to one of three interchangeable [`Backend`]s:
//!
//! * [`mock::MockBackend`], a deterministic rule engine,
//! * [`replay::ReplayBackend`], a record/replay cache keyed by request digest,
//! * [`live::LiveBackend`], an OpenAI-compatible HTTP client.
//!
//! No other module performs network activity.

pub mod live;
pub mod mock;
pub mod replay;
pub mod templates;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::stores::Embedding;
pub use templates::{PromptTemplate, TemplateError, TemplateRegistry, TemplateRole};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
    #[error("unparseable backend response: {0}")]
    ParseFailure(String),
    #[error("no cached response for request {0}")]
    CacheMiss(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Decoding parameters. Study calls always use temperature 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Decoding {
    pub fn greedy(max_output_tokens: u32) -> Self {
        Decoding { temperature: 0.0, max_output_tokens }
    }
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding::greedy(512)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role: TemplateRole,
    pub template_id: String,
    pub variables: BTreeMap<String, String>,
    pub decoding: Decoding,
}

impl CompletionRequest {
    pub fn new(role: TemplateRole, template_id: &str) -> Self {
        CompletionRequest { role, template_id: template_id.to_string(), variables: BTreeMap::new(), decoding: Decoding::default() }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    pub fn max_output_tokens(mut self, n: u32) -> Self {
        self.decoding.max_output_tokens = n;
        self
    }
}

/// A fully resolved request as seen by a backend.
#[derive(Debug, Clone, Copy)]
pub struct Prompt<'a> {
    pub template: &'a PromptTemplate,
    pub variables: &'a BTreeMap<String, String>,
    pub rendered: &'a str,
    pub decoding: Decoding,
}

pub trait Backend: Send + Sync {
    /// Opaque model identifier; part of the replay cache key.
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &Prompt<'_>) -> Result<String, GatewayError>;
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

#[derive(Debug, Default)]
struct CallCounters {
    by_role: [AtomicU64; 4],
    embeddings: AtomicU64,
}

fn role_slot(role: TemplateRole) -> usize {
    match role {
        TemplateRole::GraphExtraction => 0,
        TemplateRole::QaSystem => 1,
        TemplateRole::Grading => 2,
        TemplateRole::Summarization => 3,
    }
}

pub struct Gateway {
    registry: TemplateRegistry,
    backend: Box<dyn Backend>,
    counters: CallCounters,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("model", &self.backend.model_id()).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(registry: TemplateRegistry, backend: Box<dyn Backend>) -> Self {
        Gateway { registry, backend, counters: CallCounters::default() }
    }

    /// Builtin templates over the deterministic mock backend.
    pub fn mock() -> Self {
        Gateway::new(TemplateRegistry::builtin(), Box::new(mock::MockBackend::default()))
    }

    pub fn registry(&self) -> &TemplateRegistry {
        &self.registry
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn render(&self, role: TemplateRole, template_id: &str, variables: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        self.registry.render(role, template_id, variables)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let template = self.registry.get(request.role, &request.template_id)?;
        let rendered = template.render(&request.variables)?;
        self.counters.by_role[role_slot(request.role)].fetch_add(1, Ordering::Relaxed);
        let prompt = Prompt { template, variables: &request.variables, rendered: &rendered, decoding: request.decoding };
        self.backend.complete(&prompt)
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding, GatewayError> {
        self.counters.embeddings.fetch_add(1, Ordering::Relaxed);
        Ok(Embedding::new(self.backend.embed(text)?))
    }

    /// Completion calls issued for `role` since construction.
    pub fn calls(&self, role: TemplateRole) -> u64 {
        self.counters.by_role[role_slot(role)].load(Ordering::Relaxed)
    }

    pub fn embedding_calls(&self) -> u64 {
        self.counters.embeddings.load(Ordering::Relaxed)
    }
}

/// True when `GT_OFFLINE=1` forbids network use.
pub fn offline_mode() -> bool {
    std::env::var("GT_OFFLINE").map(|v| v.trim() == "1").unwrap_or(false)
}
