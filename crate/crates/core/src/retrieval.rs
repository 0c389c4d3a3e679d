//! Context retrieval strategies and answer generation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gateway::{CompletionRequest, Gateway, GatewayError, TemplateRole};
use crate::ingest::{KnowledgeGraph, Triplet};
use crate::stores::{Collection, StoreError, TrialStores};
use crate::text::truncate_tokens;

/// Line placed between context items.
pub const CONTEXT_SEPARATOR: &str = "\n---\n";
/// Node descriptions are cut to this many tokens inside triplet lines.
pub const DESCRIPTION_TOKENS: usize = 30;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("{strategy} has nothing to retrieve from: {detail}")]
    EmptyStore { strategy: Strategy, detail: &'static str },
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ChunkCompletion,
    GraphCompletion,
    SummaryBased,
    ChunkDirect,
    GraphNeighborhood,
    GraphSummaryCompletion,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::ChunkCompletion,
        Strategy::GraphCompletion,
        Strategy::SummaryBased,
        Strategy::ChunkDirect,
        Strategy::GraphNeighborhood,
        Strategy::GraphSummaryCompletion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ChunkCompletion => "chunk_completion",
            Strategy::GraphCompletion => "graph_completion",
            Strategy::SummaryBased => "summary_based",
            Strategy::ChunkDirect => "chunk_direct",
            Strategy::GraphNeighborhood => "graph_neighborhood",
            Strategy::GraphSummaryCompletion => "graph_summary_completion",
        }
    }

    /// Whether retrieved context is passed to the QA model. When false the
    /// retrieved text itself is the prediction.
    pub fn generates(self) -> bool {
        !matches!(self, Strategy::ChunkDirect | Strategy::GraphNeighborhood)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub item_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub strategy: Strategy,
    pub items: Vec<ContextItem>,
    pub rendered_context: String,
    pub generate: bool,
}

impl ContextBundle {
    pub fn new(strategy: Strategy, items: Vec<ContextItem>) -> Self {
        let rendered_context = items.iter().map(|i| i.text.as_str()).collect::<Vec<_>>().join(CONTEXT_SEPARATOR);
        ContextBundle { strategy, items, rendered_context, generate: strategy.generates() }
    }
}

/// `subject —[predicate]→ object :: subject description | object description`
pub fn format_triplet(triplet: &Triplet, graph: &KnowledgeGraph) -> String {
    let name = |id: &str| graph.node(id).map_or(id.to_string(), |n| n.name.clone());
    let desc = |id: &str| graph.node(id).map_or("", |n| truncate_tokens(&n.description, DESCRIPTION_TOKENS)).to_string();
    format!(
        "{} —[{}]→ {} :: {} | {}",
        name(&triplet.subject),
        triplet.predicate,
        name(&triplet.object),
        desc(&triplet.subject),
        desc(&triplet.object)
    )
}

/// Chunks ranked by similarity. Where a chunk has a summary, the better of
/// the chunk and summary similarities counts.
fn ranked_chunks(question: &str, stores: &TrialStores, gateway: &Gateway, prefer_summary: bool) -> Result<Vec<(String, f64)>, RetrievalError> {
    let q = stores.embed(question, gateway)?;
    let chunk_index = stores.vectors(Collection::Chunks);
    let summaries: BTreeMap<String, f64> =
        stores.vectors(Collection::Summaries).rank(Collection::Summaries, &q).into_iter().map(|h| (h.item_id, h.score)).collect();
    let mut scored: Vec<(String, f64)> = chunk_index
        .rank(Collection::Chunks, &q)
        .into_iter()
        .map(|h| {
            let score = match (summaries.get(&h.item_id), prefer_summary) {
                (Some(s), true) => *s,
                (Some(s), false) => s.max(h.score),
                (None, _) => h.score,
            };
            (h.item_id, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(scored)
}

/// Triplets around the best-matching nodes, in node-rank order, each once,
/// until `top_k` are gathered.
fn ranked_triplets<'s>(
    question: &str,
    top_k: usize,
    stores: &'s TrialStores,
    gateway: &Gateway,
    strategy: Strategy,
    nodes_to_expand: usize,
) -> Result<Vec<&'s Triplet>, RetrievalError> {
    if stores.vectors(Collection::Nodes).is_empty() {
        return Err(RetrievalError::EmptyStore { strategy, detail: "no nodes are indexed" });
    }
    if stores.graph().triplets.is_empty() {
        return Err(RetrievalError::EmptyStore { strategy, detail: "the graph has no triplets" });
    }
    let q = stores.embed(question, gateway)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for hit in stores.vectors(Collection::Nodes).rank(Collection::Nodes, &q).into_iter().take(nodes_to_expand) {
        for t in stores.neighborhood(&hit.item_id, 1)? {
            if out.len() == top_k {
                return Ok(out);
            }
            if seen.insert(t.id()) {
                out.push(t);
            }
        }
    }
    Ok(out)
}

fn triplet_items(triplets: &[&Triplet], graph: &KnowledgeGraph) -> Vec<ContextItem> {
    triplets.iter().map(|t| ContextItem { item_id: t.id(), text: format_triplet(t, graph) }).collect()
}

/// Retrieves context for `question` from frozen stores.
pub fn retrieve(question: &str, strategy: Strategy, top_k: usize, stores: &TrialStores, gateway: &Gateway) -> Result<ContextBundle, RetrievalError> {
    if top_k == 0 {
        return Err(RetrievalError::InvalidTopK);
    }
    let items = match strategy {
        Strategy::ChunkCompletion | Strategy::ChunkDirect | Strategy::SummaryBased => {
            if stores.vectors(Collection::Chunks).is_empty() {
                return Err(RetrievalError::EmptyStore { strategy, detail: "no chunks are indexed" });
            }
            let summaries = strategy == Strategy::SummaryBased;
            ranked_chunks(question, stores, gateway, summaries)?
                .into_iter()
                .take(top_k)
                .map(|(id, _)| {
                    let summary = if summaries { stores.item_text(Collection::Summaries, &id) } else { None };
                    let text = summary.or_else(|| stores.item_text(Collection::Chunks, &id)).unwrap_or_default().to_string();
                    ContextItem { item_id: id, text }
                })
                .collect()
        }
        Strategy::GraphCompletion => {
            let triplets = ranked_triplets(question, top_k, stores, gateway, strategy, usize::MAX)?;
            triplet_items(&triplets, stores.graph())
        }
        Strategy::GraphNeighborhood => {
            let triplets = ranked_triplets(question, top_k, stores, gateway, strategy, 1)?;
            triplet_items(&triplets, stores.graph())
        }
        Strategy::GraphSummaryCompletion => {
            let triplets = ranked_triplets(question, top_k, stores, gateway, strategy, usize::MAX)?;
            let lines = triplet_items(&triplets, stores.graph()).into_iter().map(|i| i.text).collect::<Vec<_>>().join("\n");
            let request = CompletionRequest::new(TemplateRole::Summarization, "default").var("text", lines).max_output_tokens(256);
            let summary = gateway.complete(&request)?.trim().to_string();
            vec![ContextItem { item_id: "subgraph-summary".to_string(), text: summary }]
        }
    };
    Ok(ContextBundle::new(strategy, items))
}

/// Like [`retrieve`], but an empty store yields an empty bundle and a warning.
pub fn retrieve_or_empty(question: &str, strategy: Strategy, top_k: usize, stores: &TrialStores, gateway: &Gateway) -> Result<ContextBundle, RetrievalError> {
    match retrieve(question, strategy, top_k, stores, gateway) {
        Err(e @ RetrievalError::EmptyStore { .. }) => {
            log::warn!("{e}; answering from empty context");
            Ok(ContextBundle::new(strategy, Vec::new()))
        }
        other => other,
    }
}

/// Runs the QA template over the bundle and returns the trimmed answer.
pub fn answer(question: &str, bundle: &ContextBundle, qa_prompt: &str, gateway: &Gateway) -> Result<String, GatewayError> {
    let request = CompletionRequest::new(TemplateRole::QaSystem, qa_prompt)
        .var("question", question)
        .var("context", bundle.rendered_context.as_str());
    Ok(gateway.complete(&request)?.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{merge_fragments, EntityRecord, GraphFragment, RelationRecord};

    fn star(leaves: usize) -> TrialStores {
        let gw = Gateway::mock();
        let mut entities = vec![EntityRecord { name: "Hub".into(), entity_type: "entity".into(), description: "Hub is the center.".into() }];
        let mut relations = Vec::new();
        for i in 0..leaves {
            let name = format!("Leaf{i}");
            entities.push(EntityRecord { name: name.clone(), entity_type: "entity".into(), description: format!("{name} hangs off the hub.") });
            relations.push(RelationRecord { subject: "Hub".into(), predicate: "links".into(), object: name });
        }
        let graph = merge_fragments(&[GraphFragment { entities, relations, source_chunk: "c".into() }]);
        let mut stores = TrialStores::new();
        let nodes: Vec<(String, String)> = graph.nodes.values().map(|n| (n.node_id.clone(), format!("{}: {}", n.name, n.description))).collect();
        stores.index_items(Collection::Nodes, &nodes, &gw).unwrap();
        stores.load_graph(graph);
        stores
    }

    #[test]
    fn graph_completion_truncates_to_top_k() {
        let gw = Gateway::mock();
        let stores = star(5);
        let bundle = retrieve("What is the center hub?", Strategy::GraphCompletion, 3, &stores, &gw).unwrap();
        assert_eq!(bundle.items.len(), 3);
        assert_eq!(bundle.rendered_context.matches(CONTEXT_SEPARATOR).count(), 2);
        let all = retrieve("What is the center hub?", Strategy::GraphCompletion, 20, &stores, &gw).unwrap();
        assert_eq!(all.items.len(), 5);
    }

    #[test]
    fn chunk_completion_min_rule() {
        let gw = Gateway::mock();
        let mut stores = TrialStores::new();
        let chunks: Vec<(String, String)> = (0..4).map(|i| (format!("d#{i}"), format!("Text number {i}."))).collect();
        stores.index_items(Collection::Chunks, &chunks, &gw).unwrap();
        let bundle = retrieve("number", Strategy::ChunkCompletion, 20, &stores, &gw).unwrap();
        assert_eq!(bundle.items.len(), 4);
        assert!(bundle.generate);
        assert!(!retrieve("number", Strategy::ChunkDirect, 2, &stores, &gw).unwrap().generate);
    }

    #[test]
    fn empty_graph_degrades_to_empty_context() {
        let gw = Gateway::mock();
        let stores = star(0);
        assert!(matches!(
            retrieve("hub", Strategy::GraphCompletion, 3, &stores, &gw),
            Err(RetrievalError::EmptyStore { .. })
        ));
        let bundle = retrieve_or_empty("hub", Strategy::GraphCompletion, 3, &stores, &gw).unwrap();
        assert!(bundle.items.is_empty());
        assert_eq!(answer("Where is the hub?", &bundle, "default", &gw).unwrap(), "unknown");
    }

    #[test]
    fn triplet_golden_line() {
        let graph = merge_fragments(&[GraphFragment {
            entities: vec![
                EntityRecord { name: "Paris".into(), entity_type: "city".into(), description: "Paris is the capital of France.".into() },
                EntityRecord { name: "France".into(), entity_type: "country".into(), description: String::new() },
            ],
            relations: vec![RelationRecord { subject: "Paris".into(), predicate: "capital_of".into(), object: "France".into() }],
            source_chunk: "c".into(),
        }]);
        assert_eq!(format_triplet(&graph.triplets[0], &graph), "Paris —[capital_of]→ France :: Paris is the capital of France. | ");
    }

    #[test]
    fn long_descriptions_are_cut() {
        let long = (0..50).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let graph = merge_fragments(&[GraphFragment {
            entities: vec![
                EntityRecord { name: "A".into(), entity_type: "e".into(), description: long },
                EntityRecord { name: "B".into(), entity_type: "e".into(), description: String::new() },
            ],
            relations: vec![RelationRecord { subject: "A".into(), predicate: "r".into(), object: "B".into() }],
            source_chunk: "c".into(),
        }]);
        let line = format_triplet(&graph.triplets[0], &graph);
        assert!(line.contains("w29 |") && !line.contains("w30"));
    }

    #[test]
    fn strategy_vocabulary() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
    }
}
