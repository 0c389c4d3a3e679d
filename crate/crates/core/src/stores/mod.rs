//! Trial-scoped storage: graph, vector collections and metadata tables.
//!
//! Everything lives in memory and is rebuilt every trial. Writes need
//! `&mut TrialStores`; once a trial's build is done the stores are only
//! read, so concurrent readers share `&TrialStores` freely.

pub mod graph_store;
pub mod vector;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError};
use crate::ingest::{Chunk, KnowledgeGraph, Triplet};
pub use graph_store::GraphStore;
pub use vector::{Collection, Embedding, IndexedItem, VectorHit, VectorIndex};

const SNAPSHOT_FORMAT: &str = "graphtune-stores";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("item `{id}` is already indexed in {collection}")]
    DuplicateId { collection: Collection, id: String },
    #[error("unknown collection `{0}`")]
    UnknownCollection(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("radius must be at least 1")]
    InvalidRadius,
    #[error("embedding dimension {got} differs from the store's {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("bad snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRow {
    pub question: String,
    pub gold_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRow {
    pub doc_id: String,
    pub ordinal: usize,
    pub token_count: usize,
}

/// Relational side tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataTable {
    pub qa_pairs: BTreeMap<String, QaRow>,
    pub chunks: BTreeMap<String, ChunkRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub nodes: usize,
    pub triplets: usize,
    pub summaries_text: usize,
    pub chunk_vectors: usize,
    pub summary_vectors: usize,
    pub node_vectors: usize,
    pub chunk_rows: usize,
    pub qa_rows: usize,
}

impl StoreCounts {
    pub fn is_empty(&self) -> bool {
        *self == StoreCounts::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialStores {
    graph: GraphStore,
    chunks: VectorIndex,
    summaries: VectorIndex,
    nodes: VectorIndex,
    metadata: MetadataTable,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    stores: TrialStores,
}

impl TrialStores {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empties the graph, every vector collection and the metadata tables.
    pub fn reset_all(&mut self) {
        self.graph.clear();
        for c in Collection::ALL {
            self.vectors_mut(c).clear();
        }
        self.metadata = MetadataTable::default();
    }

    pub fn counts(&self) -> StoreCounts {
        let g = self.graph.graph();
        StoreCounts {
            nodes: g.nodes.len(),
            triplets: g.triplets.len(),
            summaries_text: g.summaries.len(),
            chunk_vectors: self.chunks.len(),
            summary_vectors: self.summaries.len(),
            node_vectors: self.nodes.len(),
            chunk_rows: self.metadata.chunks.len(),
            qa_rows: self.metadata.qa_pairs.len(),
        }
    }

    pub fn vectors(&self, collection: Collection) -> &VectorIndex {
        match collection {
            Collection::Chunks => &self.chunks,
            Collection::Summaries => &self.summaries,
            Collection::Nodes => &self.nodes,
        }
    }

    fn vectors_mut(&mut self, collection: Collection) -> &mut VectorIndex {
        match collection {
            Collection::Chunks => &mut self.chunks,
            Collection::Summaries => &mut self.summaries,
            Collection::Nodes => &mut self.nodes,
        }
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        self.graph.graph()
    }

    pub fn metadata(&self) -> &MetadataTable {
        &self.metadata
    }

    pub fn embed(&self, text: &str, gateway: &Gateway) -> Result<Embedding, StoreError> {
        Ok(gateway.embed_text(text)?)
    }

    fn dimension(&self) -> Option<usize> {
        Collection::ALL.into_iter().find_map(|c| self.vectors(c).items().first().map(|i| i.embedding.dim()))
    }

    /// Embeds and stores `items`. Nothing is stored if any id is already
    /// present or repeated within the batch.
    pub fn index_items(&mut self, collection: Collection, items: &[(String, String)], gateway: &Gateway) -> Result<(), StoreError> {
        let index = self.vectors(collection);
        let mut batch = HashSet::new();
        for (id, _) in items {
            if index.contains(id) || !batch.insert(id.as_str()) {
                return Err(StoreError::DuplicateId { collection, id: id.clone() });
            }
        }
        let embeddings: Vec<Embedding> =
            items.par_iter().map(|(_, text)| gateway.embed_text(text)).collect::<Result<_, GatewayError>>()?;
        let expected = self.dimension().or_else(|| embeddings.first().map(Embedding::dim));
        if let Some(expected) = expected {
            if let Some(bad) = embeddings.iter().find(|e| e.dim() != expected) {
                return Err(StoreError::DimensionMismatch { expected, got: bad.dim() });
            }
        }
        let index = self.vectors_mut(collection);
        for ((id, text), embedding) in items.iter().zip(embeddings) {
            index.insert(IndexedItem { item_id: id.clone(), text: text.clone(), embedding });
        }
        Ok(())
    }

    /// Top `k` items of `collection` by cosine similarity to `query`.
    pub fn vector_search(&self, collection: Collection, query: &str, k: usize, gateway: &Gateway) -> Result<Vec<VectorHit>, StoreError> {
        if k == 0 {
            return Err(StoreError::InvalidK);
        }
        if self.vectors(collection).is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embed(query, gateway)?;
        Ok(self.search_embedding(collection, &q, k))
    }

    pub fn search_embedding(&self, collection: Collection, query: &Embedding, k: usize) -> Vec<VectorHit> {
        let mut hits = self.vectors(collection).rank(collection, query);
        hits.truncate(k);
        hits
    }

    pub fn item_text(&self, collection: Collection, item_id: &str) -> Option<&str> {
        self.vectors(collection).get(item_id).map(|i| i.text.as_str())
    }

    pub fn load_graph(&mut self, graph: KnowledgeGraph) {
        self.graph = GraphStore::new(graph);
    }

    pub fn neighborhood(&self, node_id: &str, radius: usize) -> Result<Vec<&Triplet>, StoreError> {
        self.graph.neighborhood(node_id, radius)
    }

    pub fn record_chunks(&mut self, chunks: &[Chunk]) {
        for c in chunks {
            self.metadata
                .chunks
                .insert(c.chunk_id.clone(), ChunkRow { doc_id: c.doc_id.clone(), ordinal: c.ordinal, token_count: c.token_count });
        }
    }

    pub fn record_qa(&mut self, id: &str, question: &str, gold_answer: &str) {
        self.metadata.qa_pairs.insert(id.to_string(), QaRow { question: question.to_string(), gold_answer: gold_answer.to_string() });
    }

    /// Versioned JSON dump of every table.
    pub fn snapshot(&self) -> String {
        let snap = Snapshot { format: SNAPSHOT_FORMAT.to_string(), version: SNAPSHOT_VERSION, stores: self.clone() };
        serde_json::to_string(&snap).expect("stores serialize")
    }

    pub fn from_snapshot(text: &str) -> Result<Self, StoreError> {
        let snap: Snapshot = serde_json::from_str(text).map_err(|e| StoreError::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(StoreError::Snapshot(format!("unsupported header {} v{}", snap.format, snap.version)));
        }
        let mut stores = snap.stores;
        stores.graph.rebuild_index();
        for c in Collection::ALL {
            stores.vectors_mut(c).rebuild_ids();
        }
        Ok(stores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn index_search_and_reset() {
        let gw = Gateway::mock();
        let mut s = TrialStores::new();
        s.index_items(Collection::Chunks, &items(&[("c1", "red car"), ("c2", "quantum physics"), ("c0", "red car")]), &gw).unwrap();
        let hits = s.vector_search(Collection::Chunks, "red car", 10, &gw).unwrap();
        assert_eq!(hits.iter().map(|h| h.item_id.as_str()).collect::<Vec<_>>(), vec!["c0", "c1", "c2"]);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        assert_eq!(s.vector_search(Collection::Chunks, "red", 1, &gw).unwrap().len(), 1);
        assert_eq!(s.vector_search(Collection::Chunks, "red", 0, &gw), Err(StoreError::InvalidK));

        s.reset_all();
        assert!(s.counts().is_empty());
        s.reset_all();
        assert!(s.vector_search(Collection::Chunks, "red car", 3, &gw).unwrap().is_empty());
        assert_eq!(s.snapshot(), TrialStores::new().snapshot());
    }

    #[test]
    fn duplicate_ids_rejected_atomically() {
        let gw = Gateway::mock();
        let mut s = TrialStores::new();
        s.index_items(Collection::Nodes, &items(&[("a", "x")]), &gw).unwrap();
        let err = s.index_items(Collection::Nodes, &items(&[("b", "y"), ("a", "z")]), &gw).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateId { .. }));
        assert!(s.index_items(Collection::Nodes, &items(&[("c", "y"), ("c", "z")]), &gw).is_err());
        assert_eq!(s.vectors(Collection::Nodes).len(), 1);
        s.index_items(Collection::Nodes, &[], &gw).unwrap();
        assert_eq!(s.vectors(Collection::Nodes).len(), 1);
    }

    #[test]
    fn snapshot_round_trip() {
        let gw = Gateway::mock();
        let mut s = TrialStores::new();
        s.index_items(Collection::Summaries, &items(&[("a", "alpha beta"), ("b", "gamma")]), &gw).unwrap();
        s.record_qa("q1", "Who?", "Ada");
        let restored = TrialStores::from_snapshot(&s.snapshot()).unwrap();
        assert_eq!(restored.snapshot(), s.snapshot());
        assert_eq!(restored.item_text(Collection::Summaries, "b"), Some("gamma"));
        assert!(TrialStores::from_snapshot("{}").is_err());
    }
}
