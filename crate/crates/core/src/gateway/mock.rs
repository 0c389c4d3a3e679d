//! Deterministic rule engine standing in for a language model.
//!
//! The rules are keyed by template role and read the instruction text of
//! the template, so choosing a different prompt changes the output the way
//! it would with a real model:
//!
//! * graph extraction: entities are runs of capitalized tokens (plus
//!   standalone numbers); each sentence links its mentions, with the
//!   predicate taken from a keyword table and `related_to` as fallback.
//!   A template asking for a *single step* keeps only keyword relations;
//!   one asking to work *incrementally* resolves sentence-initial pronouns
//!   to the running topic and links every pair of mentions in a sentence.
//! * summarization: the first sentence of the first non-empty line.
//! * QA: picks the context segment with the largest content-word overlap
//!   with the question. Templates asking for *as few words as possible*
//!   get the best span of that segment not already in the question; those
//!   asking to *justify* get the segment plus a justification clause; all
//!   others get the segment as a full sentence. No overlap yields
//!   `unknown`.
//! * grading: token F1 against the gold answer (or best alias), mapped to
//!   1.0 at F1 >= 0.8, 0.5 at F1 >= 0.4 and 0.0 otherwise.
//!
//! Embeddings are hashed unigram bags: content words hashed with FNV-1a
//! into `dim` buckets, then L2-normalized.

use std::collections::BTreeSet;

use super::{Backend, GatewayError, Prompt, TemplateRole};
use crate::evaluation::metrics::token_f1;
use crate::text::{is_stopword, split_sentences, words};

pub const DEFAULT_EMBEDDING_DIM: usize = 256;
pub const ABSTAIN: &str = "unknown";

#[derive(Debug, Clone)]
pub struct MockBackend {
    dim: usize,
    model: String,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend { dim: DEFAULT_EMBEDDING_DIM, model: "mock-rules-v1".to_string() }
    }
}

impl MockBackend {
    pub fn with_dim(dim: usize) -> Self {
        MockBackend { dim, ..Default::default() }
    }
}

impl Backend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &Prompt<'_>) -> Result<String, GatewayError> {
        let var = |name: &str| prompt.variables.get(name).map(String::as_str).unwrap_or("");
        let body = prompt.template.body.to_lowercase();
        Ok(match prompt.template.role {
            TemplateRole::GraphExtraction => extract_graph(var("text"), GraphStyle::from_instructions(&body)),
            TemplateRole::Summarization => summarize(var("text")),
            TemplateRole::QaSystem => answer(var("question"), var("context"), AnswerStyle::from_instructions(&body)),
            TemplateRole::Grading => grade(var("prediction"), var("gold"), var("aliases")),
        })
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        Ok(hashed_embedding(text, self.dim))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hashed bag of content words, L2-normalized. Falls back to all words when
/// the text has only stopwords; the zero vector when it has no words.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let all = words(text);
    let content: Vec<&String> = all.iter().filter(|w| !is_stopword(w)).collect();
    let bag: Vec<&String> = if content.is_empty() { all.iter().collect() } else { content };
    let mut v = vec![0.0; dim];
    for w in bag {
        v[(fnv1a64(w.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn summarize(text: &str) -> String {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| split_sentences(l).first().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn grade(prediction: &str, gold: &str, aliases: &str) -> String {
    let f1 = std::iter::once(gold)
        .chain(aliases.split(';').map(str::trim).filter(|a| !a.is_empty() && *a != "none"))
        .map(|g| token_f1(prediction, g))
        .fold(0.0, f64::max);
    let score = if f1 >= 0.8 {
        1.0
    } else if f1 >= 0.4 {
        0.5
    } else {
        0.0
    };
    format!("{score:.1} - the prediction has token F1 {f1:.2} against the reference.")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AnswerStyle {
    Terse,
    Sentence,
    Justified,
}

impl AnswerStyle {
    fn from_instructions(body: &str) -> Self {
        if body.contains("justify") {
            AnswerStyle::Justified
        } else if body.contains("as few words as possible") {
            AnswerStyle::Terse
        } else {
            AnswerStyle::Sentence
        }
    }
}

fn content_words(text: &str) -> BTreeSet<String> {
    words(text).into_iter().filter(|w| !is_stopword(w)).collect()
}

/// Sentences of the context, with triplet lines broken at their field
/// separators.
fn context_segments(context: &str) -> Vec<&str> {
    context
        .lines()
        .filter(|l| l.trim() != "---")
        .flat_map(|l| l.split(" :: "))
        .flat_map(|l| l.split(" | "))
        .flat_map(split_sentences)
        .collect()
}

fn trim_token(token: &str) -> &str {
    let core = token.trim_matches(|c: char| !c.is_alphanumeric());
    core.strip_suffix("'s").or_else(|| core.strip_suffix("’s")).unwrap_or(core)
}

type SpanKey = (bool, usize);

fn close_run<'a>(run: &mut Vec<&'a str>, best: &mut Option<(SpanKey, Vec<&'a str>)>) {
    if run.is_empty() {
        return;
    }
    let salient = run.iter().any(|t| t.chars().any(|c| c.is_uppercase() || c.is_ascii_digit()));
    let key = (salient, run.len());
    if best.as_ref().is_none_or(|(k, _)| key > *k) {
        *best = Some((key, run.clone()));
    }
    run.clear();
}

fn best_span(segment: &str, question_words: &BTreeSet<String>) -> Option<String> {
    let mut best: Option<(SpanKey, Vec<&str>)> = None;
    let mut run: Vec<&str> = Vec::new();
    for token in segment.split_whitespace() {
        let core = trim_token(token);
        let ws = words(core);
        let candidate =
            !ws.is_empty() && !ws.iter().all(|w| is_stopword(w)) && ws.iter().all(|w| !question_words.contains(w));
        if candidate {
            run.push(core);
        } else {
            close_run(&mut run, &mut best);
        }
    }
    close_run(&mut run, &mut best);
    best.map(|(_, run)| run.join(" "))
}

fn answer(question: &str, context: &str, style: AnswerStyle) -> String {
    let question_words = content_words(question);
    let mut best: Option<(usize, &str)> = None;
    for segment in context_segments(context) {
        let overlap = content_words(segment).intersection(&question_words).count();
        if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, segment));
        }
    }
    let Some((_, segment)) = best else { return ABSTAIN.to_string() };
    match style {
        AnswerStyle::Terse => best_span(segment, &question_words).unwrap_or_else(|| ABSTAIN.to_string()),
        AnswerStyle::Sentence => segment.to_string(),
        AnswerStyle::Justified => {
            format!("{segment} This is supported by the retrieved context, which states it directly.")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GraphStyle {
    Default,
    SingleStep,
    Incremental,
}

impl GraphStyle {
    fn from_instructions(body: &str) -> Self {
        if body.contains("incrementally") {
            GraphStyle::Incremental
        } else if body.contains("single step") {
            GraphStyle::SingleStep
        } else {
            GraphStyle::Default
        }
    }
}

const PREDICATES: &[(&str, &str)] = &[
    ("capital of", "capital_of"),
    ("born in", "born_in"),
    ("died in", "died_in"),
    ("directed by", "directed_by"),
    ("written by", "written_by"),
    ("designed by", "designed_by"),
    ("founded by", "founded_by"),
    ("founded in", "founded_in"),
    ("built in", "built_in"),
    ("released in", "released_in"),
    ("headquartered in", "headquartered_in"),
    ("located in", "located_in"),
    ("member of", "member_of"),
    ("part of", "part_of"),
    ("mayor of", "mayor_of"),
    ("named after", "named_after"),
    ("flows into", "flows_into"),
    ("plays for", "plays_for"),
    ("works at", "works_at"),
    ("married", "spouse_of"),
    ("directed", "directed"),
    ("wrote", "wrote"),
    ("founded", "founded"),
    ("composed", "composed"),
];

fn predicate_for(between: &str) -> Option<&'static str> {
    let between = format!(" {} ", words(between).join(" "));
    PREDICATES.iter().find(|(kw, _)| between.contains(&format!(" {kw} "))).map(|(_, p)| *p)
}

const LEADING_FUNCTION_WORDS: &[&str] =
    &["a", "after", "an", "at", "before", "during", "he", "her", "his", "in", "it", "its", "on", "she", "the", "they", "this", "when"];
const PRONOUNS: &[&str] = &["he", "it", "she", "they"];

#[derive(Debug, Clone)]
struct Mention {
    name: String,
    start: usize,
    end: usize,
    numeric: bool,
}

fn whitespace_tokens(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(st)) => {
                out.push((st, &s[st..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push((st, &s[st..]));
    }
    out
}

fn mentions(sentence: &str) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut current: Vec<(usize, usize, &str)> = Vec::new();
    let flush = |current: &mut Vec<(usize, usize, &str)>, out: &mut Vec<Mention>| {
        while let Some((_, _, first)) = current.first() {
            if LEADING_FUNCTION_WORDS.contains(&first.to_lowercase().as_str()) {
                current.remove(0);
            } else {
                break;
            }
        }
        if let (Some(first), Some(last)) = (current.first(), current.last()) {
            let name = current.iter().map(|(_, _, t)| *t).collect::<Vec<_>>().join(" ");
            out.push(Mention { name, start: first.0, end: last.1, numeric: false });
        }
        current.clear();
    };
    for (offset, token) in whitespace_tokens(sentence) {
        let core = trim_token(token);
        if core.is_empty() {
            flush(&mut current, &mut out);
            continue;
        }
        let core_start = offset + token.find(core).unwrap_or(0);
        let core_end = core_start + core.len();
        let breaks_after = token.ends_with(|c: char| !c.is_alphanumeric());
        if core.chars().all(|c| c.is_ascii_digit()) && core.len() >= 3 {
            flush(&mut current, &mut out);
            out.push(Mention { name: core.to_string(), start: core_start, end: core_end, numeric: true });
            continue;
        }
        if core.chars().next().is_some_and(char::is_uppercase) {
            current.push((core_start, core_end, core));
            if breaks_after {
                flush(&mut current, &mut out);
            }
        } else {
            flush(&mut current, &mut out);
        }
    }
    flush(&mut current, &mut out);
    out
}

fn clean_field(s: &str) -> String {
    s.replace(['|', '\n', '\r'], " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn extract_graph(text: &str, style: GraphStyle) -> String {
    let mut entities: Vec<(String, &'static str, String)> = Vec::new();
    let mut relations: Vec<(String, &'static str, String)> = Vec::new();
    let mut topic: Option<String> = None;
    for sentence in text.lines().flat_map(split_sentences) {
        let mut found = mentions(sentence);
        if style == GraphStyle::Incremental {
            if let (Some(topic), Some((_, first))) = (&topic, whitespace_tokens(sentence).first()) {
                if PRONOUNS.contains(&first.to_lowercase().as_str()) {
                    found.insert(0, Mention { name: topic.clone(), start: 0, end: first.len(), numeric: false });
                }
            }
        }
        if let Some(first) = found.first() {
            topic = Some(first.name.clone());
        }
        for m in &found {
            if !entities.iter().any(|(n, _, _)| n.to_lowercase() == m.name.to_lowercase()) {
                entities.push((m.name.clone(), if m.numeric { "number" } else { "entity" }, sentence.to_string()));
            }
        }
        let mut link = |i: usize, j: usize| {
            let (a, b) = (&found[i], &found[j]);
            if a.name.to_lowercase() == b.name.to_lowercase() || a.end > b.start {
                return;
            }
            let predicate = match (predicate_for(&sentence[a.end..b.start]), style) {
                (Some(p), _) => p,
                (None, GraphStyle::SingleStep) => return,
                (None, _) => "related_to",
            };
            relations.push((a.name.clone(), predicate, b.name.clone()));
        };
        for i in 0..found.len() {
            match style {
                GraphStyle::Incremental => (i + 1..found.len()).for_each(|j| link(i, j)),
                _ if i + 1 < found.len() => link(i, i + 1),
                _ => {}
            }
        }
    }
    let mut out = String::from("```graph\n");
    for (name, kind, description) in &entities {
        out.push_str(&format!("ENTITY {} | {} | {}\n", clean_field(name), kind, clean_field(description)));
    }
    for (s, p, o) in &relations {
        out.push_str(&format!("REL {} | {} | {}\n", clean_field(s), p, clean_field(o)));
    }
    out.push_str("```\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn capital_sentence_extraction() {
        let out = extract_graph("Paris is the capital of France.", GraphStyle::Default);
        assert!(out.contains("ENTITY Paris | entity | Paris is the capital of France."));
        assert!(out.contains("ENTITY France | entity |"));
        assert!(out.contains("REL Paris | capital_of | France"));
    }

    #[test]
    fn styles_differ_in_relations() {
        let text = "Glass Harbor is a 1998 drama film. It was directed by Mara Velkin.";
        let default = extract_graph(text, GraphStyle::Default);
        assert!(default.contains("REL Glass Harbor | related_to | 1998"));
        assert!(!default.contains("directed_by"));
        let single = extract_graph(text, GraphStyle::SingleStep);
        assert!(!single.contains("REL "));
        let incremental = extract_graph(text, GraphStyle::Incremental);
        assert!(incremental.contains("REL Glass Harbor | directed_by | Mara Velkin"), "{incremental}");
    }

    #[test]
    fn leading_function_words_are_dropped() {
        let names: Vec<_> = mentions("The Velkin Prize was founded in 1961 by Ana Roe.").into_iter().map(|m| m.name).collect();
        assert_eq!(names, vec!["Velkin Prize", "1961", "Ana Roe"]);
        let names: Vec<_> = mentions("In Tarnholm, Mara Velkin's studio opened.").into_iter().map(|m| m.name).collect();
        assert_eq!(names, vec!["Tarnholm", "Mara Velkin"]);
    }

    #[test]
    fn nothing_to_extract() {
        assert_eq!(extract_graph("…", GraphStyle::Default), "```graph\n```\n");
    }

    #[test]
    fn summary_is_first_sentence() {
        assert_eq!(summarize("First one. Second one."), "First one.");
        assert_eq!(summarize("Only one"), "Only one");
        assert_eq!(summarize("\nA b. C.\nD."), "A b.");
        assert_eq!(summarize(""), "");
    }

    #[test]
    fn qa_hand_cases() {
        let ctx = "Paris is the capital of France.\n---\nBerlin is in Germany.";
        let q = "What is the capital of France?";
        assert_eq!(answer(q, ctx, AnswerStyle::Terse), "Paris");
        assert_eq!(answer(q, ctx, AnswerStyle::Sentence), "Paris is the capital of France.");
        assert!(answer(q, ctx, AnswerStyle::Justified).starts_with("Paris is the capital of France. This"));

        let ctx = "Mara Velkin is a filmmaker. Mara Velkin was born in Tarnholm in 1950.";
        assert_eq!(answer("Where was Mara Velkin born?", ctx, AnswerStyle::Terse), "Tarnholm");
        assert_eq!(answer("In which year was Mara Velkin born in Tarnholm?", ctx, AnswerStyle::Terse), "1950");

        let ctx = "Mara Velkin —[born_in]→ Tarnholm :: Mara Velkin is a filmmaker. | Tarnholm is a port.";
        assert_eq!(answer("Where was Mara Velkin born?", ctx, AnswerStyle::Terse), "Tarnholm");

        let ctx = "Ada worked as a lighthouse keeper on Skarn.";
        assert_eq!(answer("What did Ada work as on Skarn?", ctx, AnswerStyle::Terse), "lighthouse keeper");
    }

    #[test]
    fn qa_abstains_without_overlap_or_context() {
        assert_eq!(answer("Who?", "", AnswerStyle::Sentence), ABSTAIN);
        assert_eq!(answer("Where is Oslo?", "Cats purr.", AnswerStyle::Terse), ABSTAIN);
    }

    #[test]
    fn grading_thresholds() {
        assert!(grade("Paris", "Paris", "").starts_with("1.0"));
        assert!(grade("Rome", "Paris", "").starts_with("0.0"));
        assert!(grade("the city of Paris France", "Paris France", "").starts_with("0.5"));
        assert!(grade("Christiania", "Oslo", "Christiania; Kristiania").starts_with("1.0"));
    }

    #[test]
    fn embedding_similarity_ordering() {
        let d = DEFAULT_EMBEDDING_DIM;
        let a = hashed_embedding("red car", d);
        assert_eq!(a, hashed_embedding("red car", d));
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
        let near = cosine(&a, &hashed_embedding("red car driver", d));
        let far = cosine(&a, &hashed_embedding("quantum physics", d));
        assert!(near > far, "{near} vs {far}");
        assert!(hashed_embedding("", d).iter().all(|x| *x == 0.0));
        assert!(hashed_embedding("the of", d).iter().any(|x| *x > 0.0));
    }
}
