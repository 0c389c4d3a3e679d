//! Prompt templates and their registry.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown {role} template `{id}`")]
    UnknownTemplate { role: TemplateRole, id: String },
    #[error("placeholder `{{{0}}}` has no value")]
    UnboundPlaceholder(String),
    #[error("cannot load templates: {0}")]
    Load(String),
}

/// What a template is used for. Also names its prompt subdirectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateRole {
    GraphExtraction,
    QaSystem,
    Grading,
    Summarization,
}

impl TemplateRole {
    pub const ALL: [TemplateRole; 4] =
        [TemplateRole::GraphExtraction, TemplateRole::QaSystem, TemplateRole::Grading, TemplateRole::Summarization];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateRole::GraphExtraction => "graph_extraction",
            TemplateRole::QaSystem => "qa_system",
            TemplateRole::Grading => "grading",
            TemplateRole::Summarization => "summarization",
        }
    }

    pub fn directory(self) -> &'static str {
        match self {
            TemplateRole::GraphExtraction => "graph",
            TemplateRole::QaSystem => "qa",
            TemplateRole::Grading => "grading",
            TemplateRole::Summarization => "summarization",
        }
    }
}

impl fmt::Display for TemplateRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateRole::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown template role `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub role: TemplateRole,
    pub body: String,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

/// Splits a body into literal text and `{name}` placeholders, where a name
/// is `[A-Za-z_][A-Za-z0-9_]*`. Any other brace is literal text.
fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let name_start = i + 1;
            let mut j = name_start;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            let valid = j > name_start && j < bytes.len() && bytes[j] == b'}' && !bytes[name_start].is_ascii_digit();
            if valid {
                if literal_start < i {
                    out.push(Piece::Text(&body[literal_start..i]));
                }
                out.push(Piece::Slot(&body[name_start..j]));
                i = j + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    if literal_start < body.len() {
        out.push(Piece::Text(&body[literal_start..]));
    }
    out
}

impl PromptTemplate {
    pub fn new(role: TemplateRole, template_id: &str, body: &str) -> Self {
        PromptTemplate { template_id: template_id.to_string(), role, body: body.to_string() }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for piece in pieces(&self.body) {
            if let Piece::Slot(name) = piece {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }

    /// Plain substitution of every placeholder. No escaping, no truncation.
    pub fn render(&self, variables: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in pieces(&self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = variables.get(name).ok_or_else(|| TemplateError::UnboundPlaceholder(name.to_string()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

macro_rules! builtin {
    ($role:expr, $id:literal, $dir:literal) => {
        PromptTemplate::new($role, $id, include_str!(concat!("../../prompts/", $dir, "/", $id, ".txt")))
    };
}

/// Templates keyed by (role, id).
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<(TemplateRole, String), PromptTemplate>,
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped templates: three QA, three graph extraction, one
    /// grading and one summarization template.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for t in [
            builtin!(TemplateRole::QaSystem, "default", "qa"),
            builtin!(TemplateRole::QaSystem, "concise", "qa"),
            builtin!(TemplateRole::QaSystem, "detailed", "qa"),
            builtin!(TemplateRole::GraphExtraction, "default", "graph"),
            builtin!(TemplateRole::GraphExtraction, "single_step", "graph"),
            builtin!(TemplateRole::GraphExtraction, "incremental", "graph"),
            builtin!(TemplateRole::Grading, "default", "grading"),
            builtin!(TemplateRole::Summarization, "default", "summarization"),
        ] {
            reg.insert(t);
        }
        reg
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert((template.role, template.template_id.clone()), template);
    }

    /// Adds or replaces templates from `<root>/{qa,graph,grading,summarization}/*.txt`.
    /// The file stem is the template id. Missing subdirectories are skipped.
    pub fn load_dir(&mut self, root: &Path) -> Result<(), TemplateError> {
        for role in TemplateRole::ALL {
            let dir = root.join(role.directory());
            if !dir.is_dir() {
                continue;
            }
            let entries = std::fs::read_dir(&dir).map_err(|e| TemplateError::Load(format!("{}: {e}", dir.display())))?;
            let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
            paths.sort();
            for path in paths {
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
                let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Load(format!("{}: {e}", path.display())))?;
                self.insert(PromptTemplate::new(role, stem, &body));
            }
        }
        Ok(())
    }

    pub fn get(&self, role: TemplateRole, id: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(&(role, id.to_string()))
            .ok_or_else(|| TemplateError::UnknownTemplate { role, id: id.to_string() })
    }

    pub fn contains(&self, role: TemplateRole, id: &str) -> bool {
        self.templates.contains_key(&(role, id.to_string()))
    }

    pub fn ids(&self, role: TemplateRole) -> Vec<&str> {
        self.templates.keys().filter(|(r, _)| *r == role).map(|(_, id)| id.as_str()).collect()
    }

    pub fn render(&self, role: TemplateRole, id: &str, variables: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        self.get(role, id)?.render(variables)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn plain_substitution() {
        let t = PromptTemplate::new(TemplateRole::QaSystem, "t", "Answer: {q}");
        assert_eq!(t.render(&vars(&[("q", "x")])).unwrap(), "Answer: x");
        assert_eq!(t.render(&vars(&[("q", "x")])).unwrap(), t.render(&vars(&[("q", "x")])).unwrap());
    }

    #[test]
    fn missing_variable() {
        let t = PromptTemplate::new(TemplateRole::QaSystem, "t", "{a} and {b}");
        assert_eq!(t.render(&vars(&[("a", "1")])), Err(TemplateError::UnboundPlaceholder("b".into())));
    }

    #[test]
    fn values_are_not_rescanned_and_odd_braces_are_literal() {
        let t = PromptTemplate::new(TemplateRole::QaSystem, "t", "{\"json\": {x}} {} {1a} {q}");
        assert_eq!(t.placeholders(), vec!["x", "q"]);
        assert_eq!(t.render(&vars(&[("x", "{q}"), ("q", "Q")])).unwrap(), "{\"json\": {q}} {} {1a} Q");
    }

    #[test]
    fn builtin_registry_shape() {
        let reg = TemplateRegistry::builtin();
        assert_eq!(reg.ids(TemplateRole::QaSystem).len(), 3);
        assert_eq!(reg.ids(TemplateRole::GraphExtraction).len(), 3);
        for id in reg.ids(TemplateRole::QaSystem) {
            assert_eq!(reg.get(TemplateRole::QaSystem, id).unwrap().placeholders(), vec!["context", "question"]);
        }
        for id in reg.ids(TemplateRole::GraphExtraction) {
            assert_eq!(reg.get(TemplateRole::GraphExtraction, id).unwrap().placeholders(), vec!["text"]);
        }
        let grading = reg.get(TemplateRole::Grading, "default").unwrap().placeholders();
        assert_eq!(grading, vec!["question", "gold", "aliases", "prediction"]);
        assert!(matches!(reg.get(TemplateRole::QaSystem, "nope"), Err(TemplateError::UnknownTemplate { .. })));
    }

    #[test]
    fn load_dir_uses_file_stems() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("qa")).unwrap();
        std::fs::write(dir.path().join("qa/terse.txt"), "Q: {question} C: {context}").unwrap();
        std::fs::write(dir.path().join("qa/notes.md"), "ignored").unwrap();
        let mut reg = TemplateRegistry::builtin();
        reg.load_dir(dir.path()).unwrap();
        assert!(reg.contains(TemplateRole::QaSystem, "terse"));
        assert!(!reg.contains(TemplateRole::QaSystem, "notes"));
        assert_eq!(reg.ids(TemplateRole::QaSystem).len(), 4);
    }
}
