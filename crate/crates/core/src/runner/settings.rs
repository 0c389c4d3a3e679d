//! Study configuration: one TOML file plus `section.key=value` overrides.
//!
//! Relative paths are resolved against the directory of the config file.
//!
//! ```toml
//! [dataset]
//! path = "data/toy_hotpotqa.json"   # required
//! adapter = "hotpotqa"              # hotpotqa | twowiki | musique
//! exclusions = "data/excluded.txt"  # optional
//!
//! [study]
//! metric = "f1"                     # em | f1 | correctness
//! n_trials = 50
//! backend = "mock"                  # mock | replay | live
//!
//! [space.top_k]                     # replaces one dimension
//! low = 1
//! high = 10
//!
//! [baseline]
//! qa_prompt = "concise"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::RunnerError;
use crate::corpus::Adapter;
use crate::evaluation::Metric;
use crate::optimizer::TpeSettings;
use crate::space::{
    baseline_config, default_search_space, validate_config, Dimension, ParamValue, PipelineConfig, SearchSpace, CHUNK_SIZE, TOP_K,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Replay,
    Live,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::Replay => "replay",
            BackendKind::Live => "live",
        }
    }

    /// Whether every response is a pure function of the request, so
    /// timestamps can be logical and artifacts bit-stable.
    pub fn deterministic(self) -> bool {
        !matches!(self, BackendKind::Live)
    }
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            "live" => Ok(BackendKind::Live),
            other => Err(format!("unknown backend `{other}` (expected mock, replay or live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySettings {
    pub study_id: String,
    pub benchmark: String,
    pub dataset_path: PathBuf,
    pub adapter: Adapter,
    pub exclusions_path: Option<PathBuf>,
    pub metric: Metric,
    pub n_trials: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub split_seed: u64,
    pub optimizer_seed: u64,
    pub bootstrap_seed: u64,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    pub backend: BackendKind,
    pub replay_dir: PathBuf,
    /// Replay without an upstream: unseen requests fail instead of being
    /// forwarded.
    pub replay_strict: bool,
    /// Backend a non-strict replay forwards misses to (mock or live).
    pub replay_upstream: BackendKind,
    pub output_dir: PathBuf,
    pub prompts_dir: Option<PathBuf>,
    pub extraction_attempts: usize,
    pub space: SearchSpace,
    pub baseline: PipelineConfig,
    pub tpe: TpeSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    dataset: RawDataset,
    #[serde(default)]
    study: RawStudy,
    #[serde(default)]
    seeds: RawSeeds,
    #[serde(default)]
    bootstrap: RawBootstrap,
    #[serde(default)]
    optimizer: TpeSettings,
    #[serde(default)]
    pipeline: RawPipeline,
    #[serde(default)]
    space: toml::Table,
    #[serde(default)]
    baseline: toml::Table,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    path: String,
    #[serde(default = "default_adapter")]
    adapter: String,
    name: Option<String>,
    exclusions: Option<String>,
}

fn default_adapter() -> String {
    "hotpotqa".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawStudy {
    id: String,
    metric: String,
    n_trials: usize,
    n_train: usize,
    n_test: usize,
    backend: String,
    output_dir: Option<String>,
    replay_dir: Option<String>,
    replay_strict: bool,
    replay_upstream: String,
}

impl Default for RawStudy {
    fn default() -> Self {
        RawStudy {
            id: "study".into(),
            metric: "f1".into(),
            n_trials: 50,
            n_train: 24,
            n_test: 12,
            backend: "mock".into(),
            output_dir: None,
            replay_dir: None,
            replay_strict: false,
            replay_upstream: "live".into(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSeeds {
    split: u64,
    optimizer: u64,
    bootstrap: u64,
}

impl Default for RawSeeds {
    fn default() -> Self {
        RawSeeds { split: 7, optimizer: 42, bootstrap: 1234 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBootstrap {
    resamples: usize,
    level: f64,
}

impl Default for RawBootstrap {
    fn default() -> Self {
        RawBootstrap { resamples: 1000, level: 0.95 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPipeline {
    extraction_attempts: usize,
    prompts_dir: Option<String>,
}

impl Default for RawPipeline {
    fn default() -> Self {
        RawPipeline { extraction_attempts: crate::ingest::DEFAULT_EXTRACTION_ATTEMPTS, prompts_dir: None }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDimension {
    low: Option<i64>,
    high: Option<i64>,
    step: Option<i64>,
    values: Option<Vec<String>>,
}

fn config_err(message: impl Into<String>) -> RunnerError {
    RunnerError::Config(message.into())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: toml::Value,
    }
    toml::from_str::<Wrapper>(&format!("v = {raw}")).map(|w| w.v).unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

/// Sets `dotted.key` = `value` inside `table`, creating tables on the way.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), RunnerError> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad override key `{key}`")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| config_err(format!("`{part}` in `{key}` is not a table")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn toml_to_param(field: &str, value: &toml::Value) -> Result<ParamValue, RunnerError> {
    match value {
        toml::Value::Integer(i) => Ok(ParamValue::Int(*i)),
        toml::Value::String(s) => Ok(ParamValue::Symbol(s.clone())),
        other => Err(config_err(format!("baseline.{field} must be an integer or string, got {other}"))),
    }
}

fn apply_space(mut space: SearchSpace, table: &toml::Table) -> Result<SearchSpace, RunnerError> {
    for (name, value) in table {
        let raw: RawDimension = value.clone().try_into().map_err(|e| config_err(format!("space.{name}: {e}")))?;
        let current = space.dimension(name).cloned();
        let dim = if matches!(name.as_str(), CHUNK_SIZE | TOP_K) {
            if raw.values.is_some() {
                return Err(config_err(format!("space.{name} is an integer range; use low/high/step")));
            }
            let (low0, high0, step0) = match current {
                Some(Dimension::Integer { low, high, step, .. }) => (low, high, step),
                _ => (1, 1, 1),
            };
            Dimension::integer(name, raw.low.unwrap_or(low0), raw.high.unwrap_or(high0), raw.step.unwrap_or(step0))
        } else {
            if raw.low.is_some() || raw.high.is_some() || raw.step.is_some() {
                return Err(config_err(format!("space.{name} is categorical; use values")));
            }
            let values = raw.values.ok_or_else(|| config_err(format!("space.{name} needs values")))?;
            Dimension::Categorical { name: name.clone(), values }
        };
        space = space.with_dimension(dim).map_err(|e| config_err(format!("space.{name}: {e}")))?;
    }
    Ok(space)
}

impl StudySettings {
    /// Settings for `dataset` with every other key at its default.
    pub fn for_dataset(dataset: &Path, adapter: Adapter) -> Self {
        let mut table = toml::Table::new();
        let mut ds = toml::Table::new();
        ds.insert("path".into(), toml::Value::String(dataset.display().to_string()));
        ds.insert("adapter".into(), toml::Value::String(adapter.to_string()));
        table.insert("dataset".into(), toml::Value::Table(ds));
        Self::from_table(table, Path::new(".")).expect("default settings are valid")
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base, overrides)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, RunnerError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_err(format!("invalid study file: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table, base_dir)
    }

    fn from_table(table: toml::Table, base_dir: &Path) -> Result<Self, RunnerError> {
        let raw: RawFile = toml::Value::Table(table).try_into().map_err(|e| config_err(format!("invalid study file: {e}")))?;
        let adapter: Adapter = raw.dataset.adapter.parse().map_err(|e| config_err(format!("{e}")))?;
        let metric: Metric = raw.study.metric.parse().map_err(config_err)?;
        let backend: BackendKind = raw.study.backend.parse().map_err(config_err)?;
        let replay_upstream: BackendKind = raw.study.replay_upstream.parse().map_err(config_err)?;
        if replay_upstream == BackendKind::Replay {
            return Err(config_err("study.replay_upstream must be mock or live"));
        }
        if raw.study.n_trials == 0 {
            return Err(config_err("study.n_trials must be at least 1"));
        }
        if raw.study.n_train == 0 || raw.study.n_test == 0 {
            return Err(config_err("study.n_train and study.n_test must be at least 1"));
        }
        if !(raw.bootstrap.level > 0.0 && raw.bootstrap.level < 1.0) || raw.bootstrap.resamples == 0 {
            return Err(config_err("bootstrap.level must lie in (0, 1) and bootstrap.resamples be positive"));
        }
        raw.optimizer.validate().map_err(config_err)?;
        let space = apply_space(default_search_space(), &raw.space)?;
        let mut baseline = baseline_config();
        for (field, value) in &raw.baseline {
            baseline.set(field, toml_to_param(field, value)?).map_err(|e| config_err(format!("baseline: {e}")))?;
        }
        validate_config(&baseline, &space).map_err(|e| config_err(format!("baseline is outside the search space: {e}")))?;
        let dataset_path = resolve(base_dir, &raw.dataset.path);
        let benchmark = raw.dataset.name.unwrap_or_else(|| {
            dataset_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "benchmark".into())
        });
        let output_dir = resolve(base_dir, raw.study.output_dir.as_deref().unwrap_or(&format!("runs/{}", raw.study.id)));
        let replay_dir = match &raw.study.replay_dir {
            Some(d) => resolve(base_dir, d),
            None => output_dir.join("replay"),
        };
        Ok(StudySettings {
            study_id: raw.study.id,
            benchmark,
            dataset_path,
            adapter,
            exclusions_path: raw.dataset.exclusions.as_deref().map(|p| resolve(base_dir, p)),
            metric,
            n_trials: raw.study.n_trials,
            n_train: raw.study.n_train,
            n_test: raw.study.n_test,
            split_seed: raw.seeds.split,
            optimizer_seed: raw.seeds.optimizer,
            bootstrap_seed: raw.seeds.bootstrap,
            bootstrap_resamples: raw.bootstrap.resamples,
            confidence_level: raw.bootstrap.level,
            backend,
            replay_dir,
            replay_strict: raw.study.replay_strict,
            replay_upstream,
            output_dir,
            prompts_dir: raw.pipeline.prompts_dir.as_deref().map(|p| resolve(base_dir, p)),
            extraction_attempts: raw.pipeline.extraction_attempts.max(1),
            space,
            baseline,
            tpe: raw.optimizer,
        })
    }
}
