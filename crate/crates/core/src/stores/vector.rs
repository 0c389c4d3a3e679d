//! Exact cosine search over embedded items.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub norm: f64,
}

impl Embedding {
    pub fn new(vector: Vec<f64>) -> Self {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        Embedding { vector, norm }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Cosine similarity clamped to `[-1, 1]`; 0 when either side is zero.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.vector.iter().zip(&other.vector).map(|(a, b)| a * b).sum();
        (dot / (self.norm * other.norm)).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collection {
    Chunks,
    Summaries,
    Nodes,
}

impl Collection {
    pub const ALL: [Collection; 3] = [Collection::Chunks, Collection::Summaries, Collection::Nodes];

    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Chunks => "chunks",
            Collection::Summaries => "summaries",
            Collection::Nodes => "nodes",
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Collection {
    type Err = StoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Collection::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| StoreError::UnknownCollection(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorHit {
    pub item_id: String,
    pub collection: Collection,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedItem {
    pub item_id: String,
    pub text: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    items: Vec<IndexedItem>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.ids.clear();
    }

    pub fn items(&self) -> &[IndexedItem] {
        &self.items
    }

    pub fn get(&self, item_id: &str) -> Option<&IndexedItem> {
        self.ids.get(item_id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.ids.contains_key(item_id)
    }

    pub fn insert(&mut self, item: IndexedItem) -> bool {
        if self.ids.contains_key(&item.item_id) {
            return false;
        }
        self.ids.insert(item.item_id.clone(), self.items.len());
        self.items.push(item);
        true
    }

    pub(crate) fn rebuild_ids(&mut self) {
        self.ids = self.items.iter().enumerate().map(|(n, i)| (i.item_id.clone(), n)).collect();
    }

    /// Every item scored against `query`, best first; ties by id ascending.
    pub fn rank(&self, collection: Collection, query: &Embedding) -> Vec<VectorHit> {
        let mut hits: Vec<VectorHit> = self
            .items
            .iter()
            .map(|i| VectorHit { item_id: i.item_id.clone(), collection, score: query.cosine(&i.embedding) })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.item_id.cmp(&b.item_id)));
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        let a = Embedding::new(vec![3.0, 4.0]);
        assert_eq!(a.norm, 5.0);
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
        assert_eq!(a.cosine(&Embedding::new(vec![-3.0, -4.0])), -1.0);
        assert_eq!(a.cosine(&Embedding::new(vec![0.0, 0.0])), 0.0);
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let mut idx = VectorIndex::default();
        for id in ["b", "a", "c"] {
            let v = if id == "c" { vec![0.0, 1.0] } else { vec![1.0, 0.0] };
            assert!(idx.insert(IndexedItem { item_id: id.into(), text: id.into(), embedding: Embedding::new(v) }));
        }
        assert!(!idx.insert(IndexedItem { item_id: "a".into(), text: String::new(), embedding: Embedding::new(vec![1.0, 0.0]) }));
        let ids: Vec<_> = idx.rank(Collection::Chunks, &Embedding::new(vec![1.0, 0.0])).into_iter().map(|h| h.item_id).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn collection_names_round_trip() {
        for c in Collection::ALL {
            assert_eq!(c.as_str().parse::<Collection>().unwrap(), c);
        }
        assert!(matches!("edges".parse::<Collection>(), Err(StoreError::UnknownCollection(_))));
    }
}
