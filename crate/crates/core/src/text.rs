//! Text primitives shared by chunking, the mock backend and the embedder.
//!
//! Tokens are maximal runs of alphanumeric characters, or a single
//! non-alphanumeric, non-whitespace character. So `"San Francisco, CA"`
//! is four tokens: `San`, `Francisco`, `,`, `CA`. Counts are computed on
//! Unicode scalar classes only and are identical on every platform.

use std::ops::Range;

/// Byte spans of every token in `text`, in order.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(i);
            }
            continue;
        }
        if let Some(s) = run_start.take() {
            spans.push(s..i);
        }
        if !c.is_whitespace() {
            spans.push(i..i + c.len_utf8());
        }
    }
    if let Some(s) = run_start {
        spans.push(s..text.len());
    }
    spans
}

/// Number of tokens in `text`.
pub fn count_tokens(text: &str) -> usize {
    token_spans(text).len()
}

/// Prefix of `text` covering at most `max_tokens` tokens, trimmed.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let spans = token_spans(text);
    if spans.len() <= max_tokens {
        return text.trim();
    }
    if max_tokens == 0 {
        return "";
    }
    text[..spans[max_tokens - 1].end].trim()
}

/// Splits text into sentences. A sentence ends at `.`, `!` or `?` (plus
/// any trailing closing quotes or brackets) followed by whitespace or the
/// end of the text. Returned slices are trimmed and never empty.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '"' | '\'' | ')' | ']' | '”' | '’') {
                j += 1;
            }
            if j == chars.len() || chars[j].1.is_whitespace() {
                let end = if j == chars.len() { text.len() } else { chars[j].0 };
                push_trimmed(&mut out, &text[start..end]);
                start = end;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

/// Lowercased alphanumeric words. Punctuation and underscores separate words.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Collapses every whitespace run to a single space and trims.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "also", "an", "and", "are", "as", "at", "be", "been", "before", "but",
    "by", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "his", "how", "in",
    "into", "is", "it", "its", "of", "on", "or", "she", "that", "the", "their", "them", "there",
    "they", "this", "to", "was", "were", "what", "when", "where", "which", "who", "whom", "whose",
    "why", "with",
];

/// Closed-class English words ignored by overlap heuristics.
pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn hand_counted_tokens() {
        let cases = [
            ("", 0),
            ("   ", 0),
            ("San Francisco, CA", 4),
            ("Paris", 1),
            ("Paris is the capital of France.", 7),
            ("U.S.A.", 6),
            ("don't", 3),
            ("1998", 1),
            ("capital_of", 3),
            ("Zürich  ist\tschön!", 4),
        ];
        for (text, expected) in cases {
            assert_eq!(count_tokens(text), expected, "{text:?}");
        }
    }

    #[test]
    fn sentences_split_on_terminators() {
        let s = split_sentences("Alpha one. Beta two! Gamma? 3.5 stays. \"Quoted.\" Tail");
        assert_eq!(s, vec!["Alpha one.", "Beta two!", "Gamma?", "3.5 stays.", "\"Quoted.\"", "Tail"]);
        assert!(split_sentences("  ").is_empty());
    }

    #[test]
    fn truncation_keeps_token_prefix() {
        assert_eq!(truncate_tokens("a b, c d", 3), "a b,");
        assert_eq!(truncate_tokens("a b", 5), "a b");
        assert_eq!(truncate_tokens("a b", 0), "");
    }

    #[test]
    fn words_lowercase_and_split_punctuation() {
        assert_eq!(words("Born_in Paris, FRANCE"), vec!["born", "in", "paris", "france"]);
    }
}
