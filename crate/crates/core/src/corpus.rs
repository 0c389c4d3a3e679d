//! Multi-hop QA benchmarks: loading, seeded train/test splits and the
//! deduplicated training documents a trial's graph is built from.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::SeededRng;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unknown dataset adapter `{0}` (expected hotpotqa, twowiki or musique)")]
    UnknownAdapter(String),
    #[error("dataset contains no records")]
    EmptyDataset,
    #[error("split needs {needed} instances but only {available} remain after exclusions")]
    InsufficientInstances { needed: usize, available: usize },
}

/// Published benchmark file shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adapter {
    HotpotQa,
    TwoWiki,
    Musique,
}

impl FromStr for Adapter {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hotpotqa" => Ok(Adapter::HotpotQa),
            "twowiki" => Ok(Adapter::TwoWiki),
            "musique" => Ok(Adapter::Musique),
            other => Err(CorpusError::UnknownAdapter(other.to_string())),
        }
    }
}

impl fmt::Display for Adapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adapter::HotpotQa => "hotpotqa",
            Adapter::TwoWiki => "twowiki",
            Adapter::Musique => "musique",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaInstance {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    /// Alternative gold strings; consulted by the correctness grader only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    pub passages: Vec<Passage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<QaInstance>,
    pub test: Vec<QaInstance>,
    pub seed: u64,
    pub exclusion_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub content_hash: String,
}

/// Hex SHA-256 of `text`.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnswerField {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct ContextRecord {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    answer: AnswerField,
    context: Vec<(String, Vec<String>)>,
}

#[derive(Deserialize)]
struct MusiqueParagraph {
    title: String,
    paragraph_text: String,
}

#[derive(Deserialize)]
struct MusiqueRecord {
    id: String,
    question: String,
    answer: AnswerField,
    #[serde(default)]
    answer_aliases: Vec<String>,
    paragraphs: Vec<MusiqueParagraph>,
}

fn split_answer(answer: AnswerField) -> (String, Vec<String>) {
    match answer {
        AnswerField::One(a) => (a, Vec::new()),
        AnswerField::Many(mut all) => {
            if all.is_empty() {
                (String::new(), all)
            } else {
                let first = all.remove(0);
                (first, all)
            }
        }
    }
}

fn map_record(adapter: Adapter, value: serde_json::Value) -> Result<QaInstance, String> {
    let instance = match adapter {
        Adapter::HotpotQa | Adapter::TwoWiki => {
            let rec: ContextRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
            let (gold_answer, aliases) = split_answer(rec.answer);
            let passages = rec
                .context
                .into_iter()
                .map(|(title, sentences)| Passage {
                    title,
                    body: sentences.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" "),
                })
                .collect();
            QaInstance { id: rec.id, question: rec.question, gold_answer, aliases, passages }
        }
        Adapter::Musique => {
            let rec: MusiqueRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
            let (gold_answer, mut aliases) = split_answer(rec.answer);
            aliases.extend(rec.answer_aliases);
            let passages = rec
                .paragraphs
                .into_iter()
                .map(|p| Passage { title: p.title, body: p.paragraph_text.trim().to_string() })
                .collect();
            QaInstance { id: rec.id, question: rec.question, gold_answer, aliases, passages }
        }
    };
    if instance.question.trim().is_empty() {
        return Err(format!("record `{}` has an empty question", instance.id));
    }
    if instance.gold_answer.trim().is_empty() {
        return Err(format!("record `{}` has an empty answer", instance.id));
    }
    if instance.passages.is_empty() {
        return Err(format!("record `{}` has no passages", instance.id));
    }
    Ok(instance)
}

/// Parses benchmark text: either one JSON array of records or one record
/// per line (JSONL).
pub fn parse_benchmark(text: &str, adapter: Adapter) -> Result<Vec<QaInstance>, CorpusError> {
    let trimmed = text.trim_start();
    let records: Vec<(String, serde_json::Value)> = if trimmed.is_empty() {
        return Err(CorpusError::EmptyDataset);
    } else if trimmed.starts_with('[') {
        let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        values.into_iter().enumerate().map(|(i, v)| (format!("record {i}"), v)).collect()
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value = serde_json::from_str(line)
                .map_err(|e| CorpusError::Parse { location: format!("line {}", i + 1), message: e.to_string() })?;
            out.push((format!("line {}", i + 1), value));
        }
        out
    };
    if records.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut seen = HashSet::new();
    let mut instances = Vec::with_capacity(records.len());
    for (location, value) in records {
        let instance = map_record(adapter, value).map_err(|message| CorpusError::Parse { location: location.clone(), message })?;
        if !seen.insert(instance.id.clone()) {
            return Err(CorpusError::Parse { location, message: format!("duplicate id `{}`", instance.id) });
        }
        instances.push(instance);
    }
    Ok(instances)
}

pub fn load_benchmark(path: &Path, adapter: Adapter) -> Result<Vec<QaInstance>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    parse_benchmark(&text, adapter)
}

/// One instance id per line; blank lines and `#` comments are ignored.
pub fn parse_exclusions(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_exclusions(path: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    Ok(parse_exclusions(&text))
}

/// Drops excluded ids, shuffles the rest with the seeded ChaCha8 stream and
/// takes the first `n_train` for training and the next `n_test` for testing.
pub fn make_split(
    instances: &[QaInstance],
    exclusion_ids: &BTreeSet<String>,
    seed: u64,
    n_train: usize,
    n_test: usize,
) -> Result<CorpusSplit, CorpusError> {
    let mut pool: Vec<&QaInstance> = instances.iter().filter(|i| !exclusion_ids.contains(&i.id)).collect();
    let needed = n_train + n_test;
    if pool.len() < needed {
        return Err(CorpusError::InsufficientInstances { needed, available: pool.len() });
    }
    SeededRng::new(seed).shuffle(&mut pool);
    let train = pool[..n_train].iter().map(|i| (*i).clone()).collect();
    let test = pool[n_train..needed].iter().map(|i| (*i).clone()).collect();
    Ok(CorpusSplit { train, test, seed, exclusion_ids: exclusion_ids.clone() })
}

/// One document per distinct passage text across `instances`, ordered by
/// (title, content hash). When the same text appears under several titles
/// the smallest title is kept.
pub fn corpus_documents(instances: &[QaInstance]) -> Vec<CorpusDocument> {
    let mut by_hash: BTreeMap<String, (String, String)> = BTreeMap::new();
    for passage in instances.iter().flat_map(|i| &i.passages) {
        if passage.body.trim().is_empty() {
            continue;
        }
        let hash = content_hash(&passage.body);
        by_hash
            .entry(hash)
            .and_modify(|(title, _)| {
                if passage.title < *title {
                    *title = passage.title.clone();
                }
            })
            .or_insert_with(|| (passage.title.clone(), passage.body.clone()));
    }
    let mut docs: Vec<CorpusDocument> = by_hash
        .into_iter()
        .map(|(hash, (title, text))| CorpusDocument { doc_id: format!("doc-{}", &hash[..16]), title, text, content_hash: hash })
        .collect();
    docs.sort_by(|a, b| (&a.title, &a.content_hash).cmp(&(&b.title, &b.content_hash)));
    docs
}
