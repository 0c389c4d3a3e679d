//! Chunking, extraction and graph assembly.

pub mod chunking;
pub mod extraction;
pub mod graph;

pub use chunking::{chunk_document, Chunk};
pub use extraction::{
    extract_graph_fragment, parse_extraction, summarize_chunk, EntityRecord, ExtractionError, GraphFragment, RelationRecord,
    DEFAULT_EXTRACTION_ATTEMPTS,
};
pub use graph::{canonical_name, merge_fragments, IntegrityError, KnowledgeGraph, Node, Triplet};
pub use crate::text::count_tokens;
