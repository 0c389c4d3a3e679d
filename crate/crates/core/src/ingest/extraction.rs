//! LLM-driven entity/relation extraction and chunk summaries.
//!
//! Extraction output is a block fenced by lines starting with three
//! backticks, holding lines of the form
//!
//! ```text
//! ENTITY <name> | <type> | <description>
//! REL <subject> | <predicate> | <object>
//! ```
//!
//! Type and description may be omitted; blank lines are ignored and any
//! other line inside the fence makes the output malformed.

use serde::{Deserialize, Serialize};

use super::chunking::Chunk;
use super::graph::canonical_name;
use crate::gateway::{CompletionRequest, Gateway, GatewayError, TemplateRole};

pub const DEFAULT_EXTRACTION_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed extraction for chunk {chunk_id} after {attempts} attempts: {reason}")]
    MalformedExtraction { chunk_id: String, attempts: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub name: String,
    pub entity_type: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// Entities and relations read from one chunk. Every relation endpoint
/// names an entity of the same fragment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFragment {
    pub entities: Vec<EntityRecord>,
    pub relations: Vec<RelationRecord>,
    pub source_chunk: String,
}

impl GraphFragment {
    pub fn empty(source_chunk: &str) -> Self {
        GraphFragment { entities: Vec::new(), relations: Vec::new(), source_chunk: source_chunk.to_string() }
    }
}

fn fields(rest: &str) -> Vec<String> {
    rest.split('|').map(|f| f.split_whitespace().collect::<Vec<_>>().join(" ")).collect()
}

/// Parses a completion into a fragment, dropping relations whose endpoints
/// are not declared entities.
pub fn parse_extraction(output: &str, source_chunk: &str) -> Result<GraphFragment, String> {
    let mut lines = output.lines().map(str::trim);
    lines.by_ref().find(|l| l.starts_with("```")).ok_or("no fenced block")?;
    let mut fragment = GraphFragment::empty(source_chunk);
    let mut closed = false;
    for line in lines.by_ref() {
        if line.starts_with("```") {
            closed = true;
            break;
        }
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("ENTITY ") {
            let f = fields(rest);
            if f.len() > 3 || f[0].is_empty() {
                return Err(format!("bad entity line `{line}`"));
            }
            let get = |i: usize| f.get(i).cloned().unwrap_or_default();
            let entity_type = if get(1).is_empty() { "entity".to_string() } else { get(1) };
            fragment.entities.push(EntityRecord { name: get(0), entity_type, description: get(2) });
        } else if let Some(rest) = line.strip_prefix("REL ") {
            let f = fields(rest);
            if f.len() != 3 || f.iter().any(String::is_empty) {
                return Err(format!("bad relation line `{line}`"));
            }
            fragment.relations.push(RelationRecord { subject: f[0].clone(), predicate: f[1].clone(), object: f[2].clone() });
        } else {
            return Err(format!("unexpected line `{line}`"));
        }
    }
    if !closed {
        return Err("unterminated fenced block".into());
    }
    let known: Vec<String> = fragment.entities.iter().map(|e| canonical_name(&e.name)).collect();
    fragment.relations.retain(|r| {
        let ok = known.contains(&canonical_name(&r.subject)) && known.contains(&canonical_name(&r.object));
        if !ok {
            log::warn!("chunk {source_chunk}: dropping relation {} -[{}]-> {} with an undeclared endpoint", r.subject, r.predicate, r.object);
        }
        ok
    });
    Ok(fragment)
}

/// Runs the graph prompt over `chunk`, retrying unparseable output up to
/// `attempts` times in total.
pub fn extract_graph_fragment(
    chunk: &Chunk,
    graph_prompt: &str,
    gateway: &Gateway,
    attempts: usize,
) -> Result<GraphFragment, ExtractionError> {
    let request = CompletionRequest::new(TemplateRole::GraphExtraction, graph_prompt).var("text", chunk.text.as_str()).max_output_tokens(1024);
    let attempts = attempts.max(1);
    let mut reason = String::new();
    for _ in 0..attempts {
        let output = gateway.complete(&request)?;
        match parse_extraction(&output, &chunk.chunk_id) {
            Ok(fragment) => return Ok(fragment),
            Err(e) => reason = e,
        }
    }
    Err(ExtractionError::MalformedExtraction { chunk_id: chunk.chunk_id.clone(), attempts, reason })
}

pub fn summarize_chunk(chunk: &Chunk, gateway: &Gateway) -> Result<String, GatewayError> {
    let request = CompletionRequest::new(TemplateRole::Summarization, "default").var("text", chunk.text.as_str()).max_output_tokens(256);
    Ok(gateway.complete(&request)?.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Backend, Prompt, TemplateRegistry};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn chunk(text: &str) -> Chunk {
        Chunk { chunk_id: "d#0".into(), doc_id: "d".into(), ordinal: 0, text: text.into(), token_count: 0 }
    }

    #[test]
    fn parses_block_and_drops_dangling_relations() {
        let out = "Sure.\n```graph\nENTITY Paris | city | Capital.\nENTITY France\n\nREL Paris | capital_of | France\nREL Paris | near | Lyon\n```\ntrailing";
        let f = parse_extraction(out, "c").unwrap();
        assert_eq!(f.entities.len(), 2);
        assert_eq!(f.entities[1], EntityRecord { name: "France".into(), entity_type: "entity".into(), description: String::new() });
        assert_eq!(f.relations, vec![RelationRecord { subject: "Paris".into(), predicate: "capital_of".into(), object: "France".into() }]);
    }

    #[test]
    fn rejects_malformed_blocks() {
        assert!(parse_extraction("ENTITY Paris", "c").is_err());
        assert!(parse_extraction("```\nENTITY Paris\n", "c").is_err());
        assert!(parse_extraction("```\nParis is a city\n```", "c").is_err());
        assert!(parse_extraction("```\nREL a | b\n```", "c").is_err());
    }

    #[test]
    fn mock_extracts_capital_relation() {
        let gw = Gateway::mock();
        let f = extract_graph_fragment(&chunk("Paris is the capital of France."), "default", &gw, 2).unwrap();
        let names: Vec<_> = f.entities.iter().map(|e| e.name.as_str()).collect();
        assert!(names.contains(&"Paris") && names.contains(&"France"));
        assert!(f.relations.contains(&RelationRecord { subject: "Paris".into(), predicate: "capital_of".into(), object: "France".into() }));
        let empty = extract_graph_fragment(&chunk("…"), "default", &gw, 2).unwrap();
        assert!(empty.entities.is_empty() && empty.relations.is_empty());
    }

    struct Garbage(AtomicUsize);
    impl Backend for Garbage {
        fn model_id(&self) -> &str {
            "garbage"
        }
        fn complete(&self, _: &Prompt<'_>) -> Result<String, GatewayError> {
            self.0.fetch_add(1, Ordering::Relaxed);
            Ok("I cannot do that.".into())
        }
        fn embed(&self, _: &str) -> Result<Vec<f64>, GatewayError> {
            Ok(vec![1.0])
        }
    }

    #[test]
    fn retries_then_reports_malformed() {
        let gw = Gateway::new(TemplateRegistry::builtin(), Box::new(Garbage(AtomicUsize::new(0))));
        let err = extract_graph_fragment(&chunk("Paris."), "default", &gw, 2).unwrap_err();
        assert!(matches!(err, ExtractionError::MalformedExtraction { attempts: 2, .. }));
        assert_eq!(gw.calls(TemplateRole::GraphExtraction), 2);
    }

    #[test]
    fn mock_summary_is_first_sentence() {
        let gw = Gateway::mock();
        assert_eq!(summarize_chunk(&chunk("Alpha is here. Beta too."), &gw).unwrap(), "Alpha is here.");
        assert_eq!(summarize_chunk(&chunk("Single sentence."), &gw).unwrap(), "Single sentence.");
    }
}
