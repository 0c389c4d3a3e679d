//! The merged per-trial knowledge graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::extraction::{EntityRecord, GraphFragment, RelationRecord};

/// Case-folded, whitespace-collapsed entity name; doubles as the node id.
pub fn canonical_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: String,
    pub name: String,
    pub entity_type: String,
    pub description: String,
    pub provenance: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub provenance: BTreeSet<String>,
}

impl Triplet {
    /// Stable identifier `subject|predicate|object`.
    pub fn id(&self) -> String {
        format!("{}|{}|{}", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub nodes: BTreeMap<String, Node>,
    pub triplets: Vec<Triplet>,
    pub summaries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntegrityError {
    #[error("triplet {triplet} references missing node {node}")]
    DanglingEndpoint { triplet: String, node: String },
    #[error("{owner} cites unknown chunk {chunk}")]
    UnknownChunk { owner: String, chunk: String },
}

/// Merges fragments in the given order. Nodes are keyed by canonical name
/// and keep the first-seen surface name, type and description; provenance
/// is unioned. Triplets are deduplicated on (subject, predicate, object).
pub fn merge_fragments(fragments: &[GraphFragment]) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::default();
    let mut triplet_slot: HashMap<(String, String, String), usize> = HashMap::new();
    for fragment in fragments {
        for e in &fragment.entities {
            let id = canonical_name(&e.name);
            let node = graph.nodes.entry(id.clone()).or_insert_with(|| Node {
                node_id: id,
                name: e.name.split_whitespace().collect::<Vec<_>>().join(" "),
                entity_type: e.entity_type.clone(),
                description: e.description.clone(),
                provenance: BTreeSet::new(),
            });
            node.provenance.insert(fragment.source_chunk.clone());
        }
        for r in &fragment.relations {
            let key = (canonical_name(&r.subject), r.predicate.trim().to_string(), canonical_name(&r.object));
            let slot = *triplet_slot.entry(key.clone()).or_insert_with(|| {
                graph.triplets.push(Triplet { subject: key.0, predicate: key.1, object: key.2, provenance: BTreeSet::new() });
                graph.triplets.len() - 1
            });
            graph.triplets[slot].provenance.insert(fragment.source_chunk.clone());
        }
    }
    graph
}

impl KnowledgeGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.triplets.is_empty() && self.summaries.is_empty()
    }

    pub fn node(&self, node_id: &str) -> Option<&Node> {
        self.nodes.get(node_id)
    }

    /// One fragment per provenance chunk, in chunk-id order, holding exactly
    /// the nodes and triplets that chunk contributed.
    pub fn to_fragments(&self) -> Vec<GraphFragment> {
        let mut by_chunk: BTreeMap<&str, GraphFragment> = BTreeMap::new();
        for node in self.nodes.values() {
            for chunk in &node.provenance {
                by_chunk.entry(chunk).or_insert_with(|| GraphFragment::empty(chunk)).entities.push(EntityRecord {
                    name: node.name.clone(),
                    entity_type: node.entity_type.clone(),
                    description: node.description.clone(),
                });
            }
        }
        for t in &self.triplets {
            for chunk in &t.provenance {
                by_chunk.entry(chunk).or_insert_with(|| GraphFragment::empty(chunk)).relations.push(RelationRecord {
                    subject: self.nodes[&t.subject].name.clone(),
                    predicate: t.predicate.clone(),
                    object: self.nodes[&t.object].name.clone(),
                });
            }
        }
        by_chunk.into_values().collect()
    }

    /// Every triplet endpoint resolves and every provenance or summary key
    /// is one of `chunk_ids`.
    pub fn check_integrity(&self, chunk_ids: &BTreeSet<String>) -> Result<(), IntegrityError> {
        for t in &self.triplets {
            for endpoint in [&t.subject, &t.object] {
                if !self.nodes.contains_key(endpoint) {
                    return Err(IntegrityError::DanglingEndpoint { triplet: t.id(), node: endpoint.clone() });
                }
            }
            if let Some(c) = t.provenance.iter().find(|c| !chunk_ids.contains(*c)) {
                return Err(IntegrityError::UnknownChunk { owner: format!("triplet {}", t.id()), chunk: c.clone() });
            }
        }
        for node in self.nodes.values() {
            if let Some(c) = node.provenance.iter().find(|c| !chunk_ids.contains(*c)) {
                return Err(IntegrityError::UnknownChunk { owner: format!("node {}", node.node_id), chunk: c.clone() });
            }
        }
        if let Some(c) = self.summaries.keys().find(|c| !chunk_ids.contains(*c)) {
            return Err(IntegrityError::UnknownChunk { owner: "summary".into(), chunk: c.clone() });
        }
        Ok(())
    }
}
