//! LLM-graded correctness.

use crate::gateway::{CompletionRequest, Gateway, TemplateRole};

/// First decimal literal in `text`, clamped to `[0, 1]`. Accepts forms
/// like `0.85`, `1`, `.5` and `-0.2`.
pub fn parse_grade(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let first_digit = bytes.iter().position(u8::is_ascii_digit)?;
    let mut start = first_digit;
    if start > 0 && bytes[start - 1] == b'.' {
        start -= 1;
    }
    if start > 0 && bytes[start - 1] == b'-' {
        start -= 1;
    }
    let mut end = first_digit;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if bytes[start..first_digit].last() != Some(&b'.')
        && end + 1 < bytes.len()
        && bytes[end] == b'.'
        && bytes[end + 1].is_ascii_digit()
    {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    let literal = text[start..end].replace("-.", "-0.");
    let literal = if literal.starts_with('.') { format!("0{literal}") } else { literal };
    literal.parse::<f64>().ok().map(|v| v.clamp(0.0, 1.0))
}

/// Asks the grader whether `prediction` matches `gold` (or an alias).
/// Returns the score and, when the grader failed, a note; failures score 0.
pub fn llm_correctness(
    gateway: &Gateway,
    template_id: &str,
    question: &str,
    prediction: &str,
    gold: &str,
    aliases: &[String],
) -> (f64, Option<String>) {
    let request = CompletionRequest::new(TemplateRole::Grading, template_id)
        .var("question", question)
        .var("prediction", prediction)
        .var("gold", gold)
        .var("aliases", if aliases.is_empty() { "none".to_string() } else { aliases.join("; ") })
        .max_output_tokens(128);
    let mut last_output = String::new();
    for _ in 0..2 {
        match gateway.complete(&request) {
            Ok(text) => match parse_grade(&text) {
                Some(score) => return (score, None),
                None => last_output = text,
            },
            Err(e) => return (0.0, Some(format!("grader error: {e}"))),
        }
    }
    (0.0, Some(format!("unparseable grader output: {}", last_output.trim())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grader_output_fixtures() {
        assert_eq!(parse_grade("0.85 because the answer names the same city"), Some(0.85));
        assert_eq!(parse_grade("Score: 1"), Some(1.0));
        assert_eq!(parse_grade("Correctness: .5 (partial)"), Some(0.5));
        assert_eq!(parse_grade("-0.2, clearly wrong"), Some(0.0));
        assert_eq!(parse_grade("I would give it 7 out of 10"), Some(1.0));
        assert_eq!(parse_grade("0.75.3"), Some(0.75));
        assert_eq!(parse_grade("no number here"), None);
        assert_eq!(parse_grade(""), None);
    }

    #[test]
    fn mock_grader_scores() {
        let gw = Gateway::mock();
        assert_eq!(llm_correctness(&gw, "default", "Q?", "Paris", "Paris", &[]), (1.0, None));
        assert_eq!(llm_correctness(&gw, "default", "Q?", "Rome", "Paris", &[]), (0.0, None));
        let (score, note) = llm_correctness(&gw, "missing", "Q?", "Rome", "Paris", &[]);
        assert_eq!(score, 0.0);
        assert!(note.unwrap().contains("grader error"));
    }
}
