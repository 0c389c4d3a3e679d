//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use graphtune::corpus::{Passage, QaInstance};
use graphtune::runner::StudySettings;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn toy_config() -> PathBuf {
    manifest_dir().join("studies/toy.toml")
}

/// Toy study settings writing into `out`.
pub fn toy_settings(out: &Path, overrides: &[&str]) -> StudySettings {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let mut s = StudySettings::load(&toy_config(), &overrides).expect("toy study file loads");
    s.output_dir = out.to_path_buf();
    s.replay_dir = out.join("replay");
    s
}

/// Normalization written from the rule list: lowercase, keep only
/// letters, digits and whitespace, drop whole-token articles.
pub fn oracle_normalize(text: &str) -> Vec<String> {
    let mut cleaned = String::new();
    for ch in text.chars() {
        for lower in ch.to_lowercase() {
            if lower.is_alphanumeric() || lower.is_whitespace() {
                cleaned.push(lower);
            }
        }
    }
    cleaned.split_whitespace().filter(|t| *t != "a" && *t != "an" && *t != "the").map(str::to_string).collect()
}

/// Token F1 by sorting both token lists and merging.
pub fn oracle_f1(prediction: &str, gold: &str) -> f64 {
    let mut p = oracle_normalize(prediction);
    let mut g = oracle_normalize(gold);
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    p.sort();
    g.sort();
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < p.len() && j < g.len() {
        match p[i].cmp(&g[j]) {
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    if common == 0 {
        return 0.0;
    }
    // 2PR/(P+R) simplifies to 2o/(|p|+|g|).
    2.0 * common as f64 / (p.len() + g.len()) as f64
}

/// All-pairs hop distances on an undirected graph by repeated relaxation.
pub fn oracle_distances(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        if a != b {
            d[a][b] = 1;
            d[b][a] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn instance(id: &str, question: &str, gold: &str, passages: &[(&str, &str)]) -> QaInstance {
    QaInstance {
        id: id.to_string(),
        question: question.to_string(),
        gold_answer: gold.to_string(),
        aliases: vec![],
        passages: passages.iter().map(|(t, b)| Passage { title: t.to_string(), body: b.to_string() }).collect(),
    }
}

/// Three documents, three questions.
pub fn tiny_benchmark() -> Vec<QaInstance> {
    let vell = ("Vell", "Vell is the capital of Oronia. The river Tam flows through Vell. Vell was founded by Ada Morrow.");
    let ada = ("Ada Morrow", "Ada Morrow was born in Kesh. Ada Morrow founded the city of Vell. Kesh is a port town.");
    let tam = ("Tam", "The Tam is a river in Oronia. The Tam flows into the Grey Sea.");
    vec![
        instance("t0", "What is Vell the capital of?", "Oronia", &[vell, tam]),
        instance("t1", "Where was Ada Morrow born?", "Kesh", &[ada, vell]),
        instance("t2", "Which river flows through Vell?", "Tam", &[vell, tam]),
    ]
}
