//! Answer normalization, exact match and token F1.
//!
//! Normalization lowercases, deletes every character that is neither
//! alphanumeric nor whitespace, drops the articles `a`, `an` and `the` as
//! whole tokens, and collapses whitespace.

use std::collections::HashMap;

pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    stripped.split_whitespace().filter(|t| !matches!(*t, "a" | "an" | "the")).collect::<Vec<_>>().join(" ")
}

/// 1.0 iff both answers normalize to the same string.
pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    if normalize_answer(prediction) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Harmonic mean of multiset token precision and recall after
/// normalization. Two empty answers agree (1.0); one empty answer scores 0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
    match (pred_tokens.is_empty(), gold_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred_tokens {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_tokens.len() as f64;
    let recall = overlap as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Eiffel Tower."), "eiffel tower");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("  A  an THE  "), "");
        assert_eq!(normalize_answer("Theatre, a play"), "theatre play");
        assert_eq!(normalize_answer("don't"), "dont");
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(exact_match("Paris", "paris"), 1.0);
        assert_eq!(exact_match("The Paris", "Paris"), 1.0);
        assert_eq!(exact_match("Paris, France", "Paris"), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("a b", "a b"), 1.0);
        // "a" is an article, so use other letters: P = R = 1/2.
        assert_eq!(token_f1("x y", "y z"), 0.5);
        assert_eq!(token_f1("x", "y"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("x", ""), 0.0);
        assert_eq!(token_f1("", "x"), 0.0);
    }
}
