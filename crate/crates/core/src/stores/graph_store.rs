//! Adjacency-indexed view of the trial graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::ingest::{KnowledgeGraph, Triplet};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphStore {
    graph: KnowledgeGraph,
    #[serde(skip)]
    incident: BTreeMap<String, Vec<usize>>,
}

impl GraphStore {
    pub fn new(graph: KnowledgeGraph) -> Self {
        let mut store = GraphStore { graph, incident: BTreeMap::new() };
        store.rebuild_index();
        store
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.incident.clear();
        for (i, t) in self.graph.triplets.iter().enumerate() {
            self.incident.entry(t.subject.clone()).or_default().push(i);
            if t.object != t.subject {
                self.incident.entry(t.object.clone()).or_default().push(i);
            }
        }
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn clear(&mut self) {
        self.graph = KnowledgeGraph::default();
        self.incident.clear();
    }

    /// Triplets touching any node within distance `radius - 1` of
    /// `node_id`, edges taken as undirected. Sorted by (subject, predicate,
    /// object).
    pub fn neighborhood(&self, node_id: &str, radius: usize) -> Result<Vec<&Triplet>, StoreError> {
        if !self.graph.nodes.contains_key(node_id) {
            return Err(StoreError::UnknownNode(node_id.to_string()));
        }
        if radius == 0 {
            return Err(StoreError::InvalidRadius);
        }
        let mut dist: BTreeMap<&str, usize> = BTreeMap::from([(node_id, 0)]);
        let mut queue = VecDeque::from([node_id]);
        let mut found: BTreeSet<usize> = BTreeSet::new();
        while let Some(node) = queue.pop_front() {
            let d = dist[node];
            for &i in self.incident.get(node).map(Vec::as_slice).unwrap_or_default() {
                found.insert(i);
                let t = &self.graph.triplets[i];
                let other = if t.subject == node { t.object.as_str() } else { t.subject.as_str() };
                if d + 1 < radius && !dist.contains_key(other) {
                    dist.insert(other, d + 1);
                    queue.push_back(other);
                }
            }
        }
        let mut out: Vec<&Triplet> = found.into_iter().map(|i| &self.graph.triplets[i]).collect();
        out.sort_by(|a, b| (&a.subject, &a.predicate, &a.object).cmp(&(&b.subject, &b.predicate, &b.object)));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Node;

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> GraphStore {
        let mut g = KnowledgeGraph::default();
        for n in nodes {
            g.nodes.insert(
                n.to_string(),
                Node { node_id: n.to_string(), name: n.to_string(), entity_type: "entity".into(), description: String::new(), provenance: BTreeSet::new() },
            );
        }
        for (s, o) in edges {
            g.triplets.push(Triplet { subject: s.to_string(), predicate: "r".into(), object: o.to_string(), provenance: BTreeSet::new() });
        }
        GraphStore::new(g)
    }

    #[test]
    fn isolated_star_and_path() {
        let g = graph(&["x", "c", "l1", "l2", "l3"], &[("c", "l1"), ("l2", "c"), ("c", "l3")]);
        assert!(g.neighborhood("x", 1).unwrap().is_empty());
        assert_eq!(g.neighborhood("c", 1).unwrap().len(), 3);
        assert_eq!(g.neighborhood("l1", 1).unwrap().len(), 1);
        let path = graph(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        assert_eq!(path.neighborhood("a", 1).unwrap().len(), 1);
        assert_eq!(path.neighborhood("a", 2).unwrap().len(), 2);
    }

    #[test]
    fn errors() {
        let g = graph(&["a"], &[]);
        assert!(matches!(g.neighborhood("zz", 1), Err(StoreError::UnknownNode(_))));
        assert!(matches!(g.neighborhood("a", 0), Err(StoreError::InvalidRadius)));
    }

    #[test]
    fn sorted_output() {
        let g = graph(&["m", "a", "z"], &[("z", "m"), ("m", "a")]);
        let ids: Vec<_> = g.neighborhood("m", 1).unwrap().iter().map(|t| t.id()).collect();
        assert_eq!(ids, vec!["m|r|a", "z|r|m"]);
    }
}
