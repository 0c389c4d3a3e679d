//! Sentence-aligned, token-budgeted chunking.

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusDocument;
use crate::text::{count_tokens, split_sentences, token_spans};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub token_count: usize,
}

/// Separator placed between the sentences of a chunk.
pub const JOIN: &str = " ";

/// Packs whole sentences greedily into chunks of at most `chunk_size`
/// tokens. A sentence longer than the budget is cut on token boundaries;
/// its tail keeps filling the next chunk.
pub fn chunk_document(doc: &CorpusDocument, chunk_size: usize) -> Vec<Chunk> {
    assert!(chunk_size >= 1, "chunk_size must be positive");
    let mut texts: Vec<(String, usize)> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_tokens = 0;
    let flush = |current: &mut Vec<&str>, current_tokens: &mut usize, texts: &mut Vec<(String, usize)>| {
        if !current.is_empty() {
            texts.push((current.join(JOIN), *current_tokens));
            current.clear();
            *current_tokens = 0;
        }
    };
    for sentence in doc.text.lines().flat_map(split_sentences) {
        let n = count_tokens(sentence);
        if current_tokens + n <= chunk_size {
            current.push(sentence);
            current_tokens += n;
            continue;
        }
        flush(&mut current, &mut current_tokens, &mut texts);
        if n <= chunk_size {
            current.push(sentence);
            current_tokens = n;
            continue;
        }
        let spans = token_spans(sentence);
        let pieces: Vec<_> = spans.chunks(chunk_size).collect();
        let (tail, full) = pieces.split_last().expect("long sentence has tokens");
        for piece in full {
            texts.push((sentence[piece[0].start..piece[piece.len() - 1].end].to_string(), piece.len()));
        }
        current.push(&sentence[tail[0].start..tail[tail.len() - 1].end]);
        current_tokens = tail.len();
    }
    flush(&mut current, &mut current_tokens, &mut texts);
    texts
        .into_iter()
        .enumerate()
        .map(|(ordinal, (text, token_count))| Chunk {
            chunk_id: format!("{}#{ordinal}", doc.doc_id),
            doc_id: doc.doc_id.clone(),
            ordinal,
            text,
            token_count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::content_hash;

    fn doc(text: &str) -> CorpusDocument {
        CorpusDocument { doc_id: "d".into(), title: "T".into(), text: text.into(), content_hash: content_hash(text) }
    }

    fn sentence(n_tokens: usize, tag: usize) -> String {
        let mut words: Vec<String> = (0..n_tokens - 1).map(|i| format!("w{tag}x{i}")).collect();
        words.last_mut().unwrap().push('.');
        words.join(" ")
    }

    #[test]
    fn short_document_is_one_chunk() {
        let d = doc("One two three four five six seven eight nine.");
        let chunks = chunk_document(&d, 200);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 10);
        assert_eq!(chunks[0].chunk_id, "d#0");
    }

    #[test]
    fn greedy_packing_by_sentence() {
        let text: Vec<String> = (0..5).map(|i| sentence(100, i)).collect();
        let chunks = chunk_document(&doc(&text.join(" ")), 250);
        let per_chunk: Vec<usize> = chunks.iter().map(|c| split_sentences(&c.text).len()).collect();
        assert_eq!(per_chunk, vec![2, 2, 1]);
        assert_eq!(chunks.iter().map(|c| c.ordinal).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn oversized_sentence_is_split() {
        let chunks = chunk_document(&doc(&sentence(300, 0)), 200);
        assert_eq!(chunks.iter().map(|c| c.token_count).collect::<Vec<_>>(), vec![200, 100]);
        for c in &chunks {
            assert_eq!(count_tokens(&c.text), c.token_count);
        }
    }

    #[test]
    fn empty_document_has_no_chunks() {
        assert!(chunk_document(&doc(""), 10).is_empty());
        assert!(chunk_document(&doc("  \n "), 10).is_empty());
    }
}
