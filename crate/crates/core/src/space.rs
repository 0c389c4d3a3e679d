//! The tunable parameter space and the untuned baseline configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::retrieval::Strategy;

pub const CHUNK_SIZE: &str = "chunk_size";
pub const SEARCH_TYPE: &str = "search_type";
pub const TOP_K: &str = "top_k";
pub const QA_PROMPT: &str = "qa_prompt";
pub const GRAPH_PROMPT: &str = "graph_prompt";
pub const TASK_GETTER: &str = "task_getter";

/// Canonical dimension order.
pub const FIELD_NAMES: [&str; 6] = [CHUNK_SIZE, SEARCH_TYPE, TOP_K, QA_PROMPT, GRAPH_PROMPT, TASK_GETTER];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpaceError {
    #[error("duplicate dimension `{0}`")]
    DuplicateDimension(String),
    #[error("dimension `{0}` has no values")]
    EmptyCategorical(String),
    #[error("dimension `{name}` repeats value `{value}`")]
    DuplicateValue { name: String, value: String },
    #[error("dimension `{name}` has low {low} > high {high}")]
    InvertedRange { name: String, low: i64, high: i64 },
    #[error("dimension `{name}` has non-positive step {step}")]
    BadStep { name: String, step: i64 },
    #[error("`{0}` is not a pipeline parameter")]
    UnknownDimension(String),
    #[error("dimension `{name}` must be {expected}")]
    WrongKind { name: String, expected: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field} = {value} is outside {bounds}")]
    OutOfDomain { field: String, value: String, bounds: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("`{0}` is not a pipeline parameter")]
    UnknownField(String),
}

/// One axis of the search space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    Categorical { name: String, values: Vec<String> },
    /// Inclusive integer range. The optimizer samples on the grid
    /// `low, low + step, ...`; validation only checks the bounds.
    Integer { name: String, low: i64, high: i64, step: i64 },
}

impl Dimension {
    pub fn name(&self) -> &str {
        match self {
            Dimension::Categorical { name, .. } | Dimension::Integer { name, .. } => name,
        }
    }

    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Dimension::Categorical { name: name.to_string(), values: values.iter().map(|v| v.to_string()).collect() }
    }

    pub fn integer(name: &str, low: i64, high: i64, step: i64) -> Self {
        Dimension::Integer { name: name.to_string(), low, high, step }
    }

    /// Grid points of an integer dimension, `None` for categoricals.
    pub fn grid(&self) -> Option<Vec<i64>> {
        match self {
            Dimension::Integer { low, high, step, .. } => Some(integer_grid(*low, *high, *step)),
            Dimension::Categorical { .. } => None,
        }
    }

    fn describe_bounds(&self) -> String {
        match self {
            Dimension::Categorical { values, .. } => format!("{{{}}}", values.join(", ")),
            Dimension::Integer { low, high, .. } => format!("[{low}, {high}]"),
        }
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (self, value) {
            (Dimension::Categorical { values, .. }, ParamValue::Symbol(s)) => values.contains(s),
            (Dimension::Integer { low, high, .. }, ParamValue::Int(v)) => low <= v && v <= high,
            _ => false,
        }
    }
}

/// `low, low + step, ...` up to `high`, with `high` itself always included.
pub fn integer_grid(low: i64, high: i64, step: i64) -> Vec<i64> {
    assert!(step >= 1 && low <= high, "bad integer grid");
    let mut points: Vec<i64> = (0..).map(|i| low + i * step).take_while(|v| *v <= high).collect();
    if points.last() != Some(&high) {
        points.push(high);
    }
    points
}

/// A value of one dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Symbol(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Symbol(s) => f.write_str(s),
        }
    }
}

/// Ordered list of dimensions over pipeline parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchSpace {
    dimensions: Vec<Dimension>,
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dimensions: Vec<Dimension>,
        }
        let raw = Raw::deserialize(deserializer)?;
        SearchSpace::new(raw.dimensions).map_err(serde::de::Error::custom)
    }
}

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, SpaceError> {
        let mut seen = BTreeSet::new();
        for dim in &dimensions {
            let name = dim.name();
            if !FIELD_NAMES.contains(&name) {
                return Err(SpaceError::UnknownDimension(name.to_string()));
            }
            if !seen.insert(name.to_string()) {
                return Err(SpaceError::DuplicateDimension(name.to_string()));
            }
            let numeric = matches!(name, CHUNK_SIZE | TOP_K);
            match dim {
                Dimension::Categorical { values, .. } => {
                    if numeric {
                        return Err(SpaceError::WrongKind { name: name.to_string(), expected: "an integer range" });
                    }
                    if values.is_empty() {
                        return Err(SpaceError::EmptyCategorical(name.to_string()));
                    }
                    let mut distinct = BTreeSet::new();
                    for v in values {
                        if !distinct.insert(v) {
                            return Err(SpaceError::DuplicateValue { name: name.to_string(), value: v.clone() });
                        }
                    }
                }
                Dimension::Integer { low, high, step, .. } => {
                    if !numeric {
                        return Err(SpaceError::WrongKind { name: name.to_string(), expected: "categorical" });
                    }
                    if low > high {
                        return Err(SpaceError::InvertedRange { name: name.to_string(), low: *low, high: *high });
                    }
                    if *step < 1 {
                        return Err(SpaceError::BadStep { name: name.to_string(), step: *step });
                    }
                }
            }
        }
        Ok(SearchSpace { dimensions })
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name() == name)
    }

    /// Returns a copy with `replacement` substituted for the dimension of
    /// the same name (or appended when absent).
    pub fn with_dimension(&self, replacement: Dimension) -> Result<Self, SpaceError> {
        let mut dims = self.dimensions.clone();
        match dims.iter_mut().find(|d| d.name() == replacement.name()) {
            Some(slot) => *slot = replacement,
            None => dims.push(replacement),
        }
        SearchSpace::new(dims)
    }
}

/// The six-dimension space tuned by default.
pub fn default_search_space() -> SearchSpace {
    SearchSpace::new(vec![
        Dimension::integer(CHUNK_SIZE, 200, 2000, 100),
        Dimension::categorical(SEARCH_TYPE, &["chunk_completion", "graph_completion"]),
        Dimension::integer(TOP_K, 1, 20, 1),
        Dimension::categorical(QA_PROMPT, &["default", "concise", "detailed"]),
        Dimension::categorical(GRAPH_PROMPT, &["default", "single_step", "incremental"]),
        Dimension::categorical(TASK_GETTER, &["with_summaries", "without_summaries"]),
    ])
    .expect("default space is well formed")
}

/// Whether chunk summaries are generated during graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskGetter {
    WithSummaries,
    WithoutSummaries,
}

impl TaskGetter {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskGetter::WithSummaries => "with_summaries",
            TaskGetter::WithoutSummaries => "without_summaries",
        }
    }
}

impl FromStr for TaskGetter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "with_summaries" => Ok(TaskGetter::WithSummaries),
            "without_summaries" => Ok(TaskGetter::WithoutSummaries),
            other => Err(format!("unknown task getter `{other}`")),
        }
    }
}

/// One point of the search space. Fully determines a trial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub chunk_size: u32,
    pub search_type: Strategy,
    pub top_k: u32,
    pub qa_prompt: String,
    pub graph_prompt: String,
    pub task_getter: TaskGetter,
}

/// The untuned configuration. These constants are a project choice:
/// mid-range chunking, plain chunk retrieval and the conversational
/// default prompts.
pub fn baseline_config() -> PipelineConfig {
    PipelineConfig {
        chunk_size: 1024,
        search_type: Strategy::ChunkCompletion,
        top_k: 5,
        qa_prompt: "default".to_string(),
        graph_prompt: "default".to_string(),
        task_getter: TaskGetter::WithSummaries,
    }
}

impl PipelineConfig {
    pub fn get(&self, field: &str) -> Option<ParamValue> {
        Some(match field {
            CHUNK_SIZE => ParamValue::Int(self.chunk_size as i64),
            SEARCH_TYPE => ParamValue::Symbol(self.search_type.as_str().to_string()),
            TOP_K => ParamValue::Int(self.top_k as i64),
            QA_PROMPT => ParamValue::Symbol(self.qa_prompt.clone()),
            GRAPH_PROMPT => ParamValue::Symbol(self.graph_prompt.clone()),
            TASK_GETTER => ParamValue::Symbol(self.task_getter.as_str().to_string()),
            _ => return None,
        })
    }

    pub fn set(&mut self, field: &str, value: ParamValue) -> Result<(), ConfigError> {
        let bad = |value: &ParamValue, bounds: &str| ConfigError::OutOfDomain {
            field: field.to_string(),
            value: value.to_string(),
            bounds: bounds.to_string(),
        };
        match (field, &value) {
            (CHUNK_SIZE, ParamValue::Int(v)) => {
                self.chunk_size = u32::try_from(*v).ok().filter(|v| *v >= 1).ok_or_else(|| bad(&value, "positive integers"))?
            }
            (TOP_K, ParamValue::Int(v)) => {
                self.top_k = u32::try_from(*v).ok().filter(|v| *v >= 1).ok_or_else(|| bad(&value, "positive integers"))?
            }
            (SEARCH_TYPE, ParamValue::Symbol(s)) => {
                self.search_type = s.parse().map_err(|_| bad(&value, "known strategies"))?
            }
            (TASK_GETTER, ParamValue::Symbol(s)) => {
                self.task_getter = s.parse().map_err(|_| bad(&value, "{with_summaries, without_summaries}"))?
            }
            (QA_PROMPT, ParamValue::Symbol(s)) => self.qa_prompt = s.clone(),
            (GRAPH_PROMPT, ParamValue::Symbol(s)) => self.graph_prompt = s.clone(),
            (CHUNK_SIZE | TOP_K, _) => return Err(bad(&value, "integers")),
            (SEARCH_TYPE | TASK_GETTER | QA_PROMPT | GRAPH_PROMPT, _) => return Err(bad(&value, "symbols")),
            _ => return Err(ConfigError::UnknownField(field.to_string())),
        }
        Ok(())
    }

    /// Builds a config from per-dimension values, taking any parameter the
    /// space does not cover from `base`.
    pub fn from_values(base: &PipelineConfig, space: &SearchSpace, values: &[ParamValue]) -> Result<Self, ConfigError> {
        let mut config = base.clone();
        for (dim, value) in space.dimensions().iter().zip(values) {
            config.set(dim.name(), value.clone())?;
        }
        Ok(config)
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "chunk_size={} search_type={} top_k={} qa_prompt={} graph_prompt={} task_getter={}",
            self.chunk_size,
            self.search_type.as_str(),
            self.top_k,
            self.qa_prompt,
            self.graph_prompt,
            self.task_getter.as_str()
        )
    }
}

/// Accepts iff every parameter covered by `space` lies in its dimension.
pub fn validate_config(config: &PipelineConfig, space: &SearchSpace) -> Result<(), ConfigError> {
    if config.chunk_size == 0 {
        return Err(ConfigError::OutOfDomain { field: CHUNK_SIZE.into(), value: "0".into(), bounds: "positive integers".into() });
    }
    if config.top_k == 0 {
        return Err(ConfigError::OutOfDomain { field: TOP_K.into(), value: "0".into(), bounds: "positive integers".into() });
    }
    for dim in space.dimensions() {
        let value = config.get(dim.name()).ok_or_else(|| ConfigError::UnknownField(dim.name().to_string()))?;
        if dim.contains(&value) {
            continue;
        }
        return Err(match dim.name() {
            QA_PROMPT | GRAPH_PROMPT => ConfigError::UnknownTemplate(value.to_string()),
            name => ConfigError::OutOfDomain { field: name.to_string(), value: value.to_string(), bounds: dim.describe_bounds() },
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_matches_table() {
        let space = default_search_space();
        let names: Vec<_> = space.dimensions().iter().map(|d| d.name()).collect();
        assert_eq!(names, FIELD_NAMES);
        assert_eq!(space.dimension(CHUNK_SIZE), Some(&Dimension::integer(CHUNK_SIZE, 200, 2000, 100)));
        match space.dimension(TOP_K).unwrap() {
            Dimension::Integer { low, high, .. } => assert_eq!((*low, *high), (1, 20)),
            other => panic!("{other:?}"),
        }
        let grid = space.dimension(CHUNK_SIZE).unwrap().grid().unwrap();
        assert_eq!(grid.len(), 19);
        assert_eq!((grid[0], grid[18]), (200, 2000));
        for name in [QA_PROMPT, GRAPH_PROMPT] {
            match space.dimension(name).unwrap() {
                Dimension::Categorical { values, .. } => assert_eq!(values.len(), 3),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn baseline_is_constant_and_in_space() {
        let base = baseline_config();
        assert_eq!(base, baseline_config());
        assert_eq!(base.search_type, Strategy::ChunkCompletion);
        validate_config(&base, &default_search_space()).unwrap();
    }

    #[test]
    fn chunk_size_bounds_are_inclusive() {
        let space = default_search_space();
        let mut config = baseline_config();
        config.chunk_size = 200;
        assert!(validate_config(&config, &space).is_ok());
        config.chunk_size = 2000;
        assert!(validate_config(&config, &space).is_ok());
        config.chunk_size = 2001;
        let err = validate_config(&config, &space).unwrap_err();
        assert_eq!(
            err,
            ConfigError::OutOfDomain { field: "chunk_size".into(), value: "2001".into(), bounds: "[200, 2000]".into() }
        );
    }

    #[test]
    fn zero_top_k_rejected() {
        let mut config = baseline_config();
        config.top_k = 0;
        match validate_config(&config, &default_search_space()) {
            Err(ConfigError::OutOfDomain { field, .. }) => assert_eq!(field, "top_k"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_prompt_and_out_of_space_strategy() {
        let space = default_search_space();
        let mut config = baseline_config();
        config.qa_prompt = "shouty".into();
        assert_eq!(validate_config(&config, &space), Err(ConfigError::UnknownTemplate("shouty".into())));
        let mut config = baseline_config();
        config.search_type = Strategy::SummaryBased;
        assert!(matches!(validate_config(&config, &space), Err(ConfigError::OutOfDomain { .. })));
    }

    #[test]
    fn space_invariants_enforced() {
        assert!(matches!(
            SearchSpace::new(vec![Dimension::integer(TOP_K, 1, 5, 1), Dimension::integer(TOP_K, 1, 5, 1)]),
            Err(SpaceError::DuplicateDimension(_))
        ));
        assert!(matches!(SearchSpace::new(vec![Dimension::integer(TOP_K, 5, 1, 1)]), Err(SpaceError::InvertedRange { .. })));
        assert!(matches!(SearchSpace::new(vec![Dimension::categorical(QA_PROMPT, &[])]), Err(SpaceError::EmptyCategorical(_))));
        assert!(matches!(
            SearchSpace::new(vec![Dimension::categorical(QA_PROMPT, &["a", "a"])]),
            Err(SpaceError::DuplicateValue { .. })
        ));
        assert!(matches!(SearchSpace::new(vec![Dimension::integer("temperature", 0, 1, 1)]), Err(SpaceError::UnknownDimension(_))));
    }

    #[test]
    fn serialization_round_trip_preserves_order() {
        let space = default_search_space();
        let json = serde_json::to_string(&space).unwrap();
        let back: SearchSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, space);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn off_grid_last_point_is_kept() {
        assert_eq!(Dimension::integer(TOP_K, 1, 6, 2).grid().unwrap(), vec![1, 3, 5, 6]);
    }
}
