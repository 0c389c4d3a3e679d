//! End-to-end studies: baseline, optimizer loop, hold-out evaluation and
//! report artifacts.

pub mod pipeline;
pub mod report;
pub mod settings;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::corpus::{corpus_documents, load_benchmark, load_exclusions, make_split, CorpusDocument, CorpusError, CorpusSplit, QaInstance};
use crate::evaluation::{EvalError, Metric, QuestionScore, ScoreReport};
use crate::gateway::live::LiveBackend;
use crate::gateway::mock::MockBackend;
use crate::gateway::replay::ReplayBackend;
use crate::gateway::{offline_mode, Backend, Gateway, GatewayError, TemplateRegistry, TemplateRole};
use crate::ingest::count_tokens;
use crate::optimizer::{OptimizerError, Study, StudyHeader, TrialState};
use crate::space::{validate_config, Dimension, PipelineConfig, GRAPH_PROMPT, QA_PROMPT};
use crate::stores::TrialStores;
pub use pipeline::{foreign_chunks, Answered, BuildStats, Evaluation, Pipeline, TrialError};
pub use report::{emit_report, Comparison, Phase, QuestionDetail, RunningMaxPoint, StudyReport, TrialSummary};
pub use settings::{apply_override, BackendKind, StudySettings};

pub const JOURNAL_FILE: &str = "study.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(#[from] CorpusError),
    #[error("backend error: {0}")]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Trial(TrialError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<TrialError> for RunnerError {
    fn from(e: TrialError) -> Self {
        match e {
            TrialError::Gateway(g) => RunnerError::Backend(g),
            TrialError::Store(crate::stores::StoreError::Gateway(g)) => RunnerError::Backend(g),
            TrialError::Retrieval(crate::retrieval::RetrievalError::Gateway(g)) => RunnerError::Backend(g),
            other => RunnerError::Trial(other),
        }
    }
}

impl RunnerError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Dataset(_) => 3,
            RunnerError::Backend(_) => 4,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io { path: path.display().to_string(), source }
}

/// Template registry for a study: the builtins plus any prompt directory.
pub fn load_registry(settings: &StudySettings) -> Result<TemplateRegistry, RunnerError> {
    let mut registry = TemplateRegistry::builtin();
    if let Some(dir) = &settings.prompts_dir {
        registry.load_dir(dir).map_err(|e| RunnerError::Config(e.to_string()))?;
    }
    for (field, role) in [(QA_PROMPT, TemplateRole::QaSystem), (GRAPH_PROMPT, TemplateRole::GraphExtraction)] {
        let mut ids: Vec<String> = vec![settings.baseline.get(field).map(|v| v.to_string()).unwrap_or_default()];
        if let Some(Dimension::Categorical { values, .. }) = settings.space.dimension(field) {
            ids.extend(values.iter().cloned());
        }
        if let Some(missing) = ids.iter().find(|id| !registry.contains(role, id)) {
            return Err(RunnerError::Config(format!("{field} `{missing}` has no {role} template")));
        }
    }
    Ok(registry)
}

fn upstream_backend(kind: BackendKind) -> Result<Box<dyn Backend>, RunnerError> {
    match kind {
        BackendKind::Mock => Ok(Box::new(MockBackend::default())),
        BackendKind::Live => Ok(Box::new(LiveBackend::from_env()?)),
        BackendKind::Replay => Err(RunnerError::Config("replay cannot forward to replay".into())),
    }
}

fn upstream_model_id(kind: BackendKind) -> Result<String, RunnerError> {
    match kind {
        BackendKind::Mock => Ok(MockBackend::default().model_id().to_string()),
        _ => {
            let s = crate::gateway::live::LiveSettings::from_env()?;
            Ok(format!("{}|{}", s.model, s.embed_model))
        }
    }
}

/// The gateway a study talks through. `GT_OFFLINE=1` turns replay strict
/// and refuses the live backend.
pub fn build_gateway(settings: &StudySettings) -> Result<Gateway, RunnerError> {
    let registry = load_registry(settings)?;
    let backend: Box<dyn Backend> = match settings.backend {
        BackendKind::Mock => Box::new(MockBackend::default()),
        BackendKind::Live => Box::new(LiveBackend::from_env()?),
        BackendKind::Replay => {
            if settings.replay_strict || offline_mode() {
                Box::new(ReplayBackend::strict(&settings.replay_dir, &upstream_model_id(settings.replay_upstream)?))
            } else {
                Box::new(ReplayBackend::recording(&settings.replay_dir, upstream_backend(settings.replay_upstream)?))
            }
        }
    };
    Ok(Gateway::new(registry, backend))
}

/// Loads the benchmark and draws the seeded split.
pub fn load_split(settings: &StudySettings) -> Result<CorpusSplit, RunnerError> {
    let instances = load_benchmark(&settings.dataset_path, settings.adapter)?;
    let exclusions = match &settings.exclusions_path {
        Some(p) => load_exclusions(p)?,
        None => Default::default(),
    };
    Ok(make_split(&instances, &exclusions, settings.split_seed, settings.n_train, settings.n_test)?)
}

fn expected_header(settings: &StudySettings) -> StudyHeader {
    StudyHeader::new(&settings.study_id, settings.space.clone(), settings.metric, settings.optimizer_seed, settings.baseline.clone(), settings.tpe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Start a new journal; an existing one is replaced only with `overwrite`.
    Fresh { overwrite: bool },
    /// Continue the journal in the output directory.
    Resume,
}

/// Everything a study needs at run time.
pub struct StudyContext {
    pub settings: StudySettings,
    pub gateway: Gateway,
    pub split: CorpusSplit,
    pub train_docs: Vec<CorpusDocument>,
}

impl StudyContext {
    pub fn new(settings: StudySettings) -> Result<Self, RunnerError> {
        let gateway = build_gateway(&settings)?;
        Self::with_gateway(settings, gateway)
    }

    pub fn with_gateway(settings: StudySettings, gateway: Gateway) -> Result<Self, RunnerError> {
        let split = load_split(&settings)?;
        let train_docs = corpus_documents(&split.train);
        Ok(StudyContext { settings, gateway, split, train_docs })
    }

    pub fn pipeline(&self) -> Pipeline<'_> {
        Pipeline { gateway: &self.gateway, extraction_attempts: self.settings.extraction_attempts }
    }

    pub fn journal_path(&self) -> PathBuf {
        self.settings.output_dir.join(JOURNAL_FILE)
    }

    /// Builds from the training documents and answers `questions`.
    pub fn run_trial(&self, stores: &mut TrialStores, config: &PipelineConfig, questions: &[QaInstance]) -> Result<Evaluation, TrialError> {
        self.pipeline().evaluate(stores, config, self.settings.metric, &self.train_docs, questions)
    }

    fn clock(&self, tick: u64) -> u64 {
        if self.settings.backend.deterministic() {
            tick
        } else {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
        }
    }
}

/// Answers of one config on both phases, scored under every metric.
struct FullEvaluation {
    train: Vec<Answered>,
    holdout: Vec<Answered>,
    scores: BTreeMap<(u8, Metric), Vec<QuestionScore>>,
}

fn phase_key(phase: Phase) -> u8 {
    match phase {
        Phase::Train => 0,
        Phase::Holdout => 1,
    }
}

fn evaluate_everywhere(ctx: &StudyContext, config: &PipelineConfig) -> Result<FullEvaluation, RunnerError> {
    let pipe = ctx.pipeline();
    let mut stores = TrialStores::new();
    pipe.build(&mut stores, config, &ctx.train_docs)?;
    let leaked = foreign_chunks(&stores, &ctx.train_docs);
    if !leaked.is_empty() {
        return Err(RunnerError::Config(format!("{} indexed chunks come from outside the training documents", leaked.len())));
    }
    let train = pipe.answer_all(&stores, config, &ctx.split.train)?;
    let holdout = pipe.answer_all(&stores, config, &ctx.split.test)?;
    let mut scores = BTreeMap::new();
    for metric in Metric::ALL {
        scores.insert((phase_key(Phase::Train), metric), pipe.score(metric, &ctx.split.train, &train));
        scores.insert((phase_key(Phase::Holdout), metric), pipe.score(metric, &ctx.split.test, &holdout));
    }
    Ok(FullEvaluation { train, holdout, scores })
}

impl FullEvaluation {
    fn report(&self, phase: Phase, metric: Metric, settings: &StudySettings) -> Result<ScoreReport, RunnerError> {
        let scores = self.scores[&(phase_key(phase), metric)].clone();
        Ok(ScoreReport::build(scores, settings.bootstrap_resamples, settings.confidence_level, settings.bootstrap_seed)?)
    }

    fn answers(&self, phase: Phase) -> &[Answered] {
        match phase {
            Phase::Train => &self.train,
            Phase::Holdout => &self.holdout,
        }
    }
}

fn open_study(ctx: &StudyContext, mode: RunMode) -> Result<Study, RunnerError> {
    let path = ctx.journal_path();
    let expected = expected_header(&ctx.settings);
    match mode {
        RunMode::Resume => {
            if !path.exists() {
                return Err(RunnerError::Config(format!("no study journal at {}", path.display())));
            }
            let study = Study::open(&path)?;
            if *study.header() != expected {
                return Err(RunnerError::Config(format!(
                    "{} was written by a different study (id, space, metric, seed, baseline or optimizer settings changed)",
                    path.display()
                )));
            }
            Ok(study)
        }
        RunMode::Fresh { overwrite } => {
            if path.exists() && !overwrite {
                return Err(RunnerError::Config(format!(
                    "{} already exists; use `study resume` or pass --overwrite",
                    path.display()
                )));
            }
            std::fs::create_dir_all(&ctx.settings.output_dir).map_err(io_err(&ctx.settings.output_dir))?;
            let mut study = Study::new(
                &ctx.settings.study_id,
                expected.space,
                expected.metric,
                expected.seed,
                expected.base,
                expected.settings,
            )?;
            study.persist_to(&path)?;
            Ok(study)
        }
    }
}

/// Runs trials until the study holds `n_trials` of them.
fn optimize(ctx: &StudyContext, study: &mut Study) -> Result<(), RunnerError> {
    let mut stores = TrialStores::new();
    while study.trials().len() < ctx.settings.n_trials {
        let i = study.trials().len();
        let config = study.suggest()?;
        let started = ctx.clock(2 * i as u64);
        let outcome = ctx.run_trial(&mut stores, &config, &ctx.split.train);
        let finished = ctx.clock(2 * i as u64 + 1);
        match outcome {
            Ok(ev) => {
                log::info!("trial {i}: {:.4} [{config}]", ev.objective);
                study.record_timed(config, ev.objective, ev.per_question, started, finished)?;
            }
            Err(e) => {
                log::warn!("trial {i} failed: {e}");
                study.record_failed(config, &e.to_string(), started, finished)?;
            }
        }
    }
    Ok(())
}

/// Evaluates the baseline and the best trial and assembles the report.
fn assemble_report(ctx: &StudyContext, study: &Study, baseline: &FullEvaluation) -> Result<StudyReport, RunnerError> {
    let settings = &ctx.settings;
    let best = study.best_trial()?;
    let optimized = evaluate_everywhere(ctx, &best.config)?;
    let metric = settings.metric;
    let mut comparisons = Vec::new();
    for phase in [Phase::Train, Phase::Holdout] {
        let mut metrics = vec![metric];
        metrics.extend(Metric::ALL.into_iter().filter(|m| *m != metric));
        for m in metrics {
            comparisons.push(Comparison::new(phase, baseline.report(phase, m, settings)?, optimized.report(phase, m, settings)?));
        }
    }
    let target = |phase: Phase| comparisons.iter().find(|c| c.phase == phase && c.metric == metric).expect("target metric present").clone();
    let (train_cmp, holdout_cmp) = (target(Phase::Train), target(Phase::Holdout));
    let objectives: BTreeMap<usize, Option<f64>> =
        study.trials().iter().map(|t| (t.trial_index, t.objective.filter(|_| t.state == TrialState::Complete))).collect();
    let running_max = study
        .running_max()
        .into_iter()
        .map(|(trial, running_max)| RunningMaxPoint { trial, objective: objectives[&trial], running_max })
        .collect();
    let mut questions = Vec::new();
    for (phase, set) in [(Phase::Train, &ctx.split.train), (Phase::Holdout, &ctx.split.test)] {
        let b_scores = &baseline.scores[&(phase_key(phase), metric)];
        let o_scores = &optimized.scores[&(phase_key(phase), metric)];
        for (i, q) in set.iter().enumerate() {
            let note = [&b_scores[i].error_note, &o_scores[i].error_note].into_iter().flatten().cloned().collect::<Vec<_>>();
            questions.push(QuestionDetail {
                phase,
                instance_id: q.id.clone(),
                question: q.question.clone(),
                gold_answer: q.gold_answer.clone(),
                baseline_prediction: baseline.answers(phase)[i].prediction.clone(),
                baseline_score: b_scores[i].value,
                optimized_prediction: optimized.answers(phase)[i].prediction.clone(),
                optimized_score: o_scores[i].value,
                error_note: (!note.is_empty()).then(|| note.join("; ")),
            });
        }
    }
    Ok(StudyReport {
        study_id: settings.study_id.clone(),
        benchmark: settings.benchmark.clone(),
        metric,
        backend: settings.backend.as_str().to_string(),
        model: ctx.gateway.model_id().to_string(),
        n_trials: study.trials().len(),
        train_ids: ctx.split.train.iter().map(|q| q.id.clone()).collect(),
        test_ids: ctx.split.test.iter().map(|q| q.id.clone()).collect(),
        baseline_config: settings.baseline.clone(),
        best_trial: best.trial_index,
        best_config: best.config.clone(),
        best_objective: best.objective.unwrap_or(0.0),
        train: train_cmp.optimized,
        holdout: holdout_cmp.optimized,
        baseline_train: train_cmp.baseline,
        baseline_holdout: holdout_cmp.baseline,
        train_gain: train_cmp.relative_gain,
        holdout_gain: holdout_cmp.relative_gain,
        comparisons,
        running_max,
        trials: study
            .trials()
            .iter()
            .map(|t| TrialSummary {
                trial_index: t.trial_index,
                state: t.state,
                objective: t.objective,
                config: t.config.clone(),
                note: t.note.clone(),
            })
            .collect(),
        questions,
    })
}

/// Runs (or resumes) a study and writes its artifacts to the output
/// directory.
pub fn run_study(ctx: &StudyContext, mode: RunMode) -> Result<StudyReport, RunnerError> {
    validate_config(&ctx.settings.baseline, &ctx.settings.space).map_err(|e| RunnerError::Config(e.to_string()))?;
    let mut study = open_study(ctx, mode)?;
    if study.trials().len() >= ctx.settings.n_trials {
        log::info!("study already holds {} trials", study.trials().len());
    }
    let baseline = evaluate_everywhere(ctx, &ctx.settings.baseline)?;
    log::info!(
        "baseline {}: {:.4}",
        ctx.settings.metric,
        crate::evaluation::aggregate(&baseline.scores[&(phase_key(Phase::Train), ctx.settings.metric)]).unwrap_or(0.0)
    );
    optimize(ctx, &mut study)?;
    let report = assemble_report(ctx, &study, &baseline)?;
    emit_report(&report, &ctx.settings.output_dir).map_err(io_err(&ctx.settings.output_dir))?;
    study.close();
    Ok(report)
}

/// Rebuilds the report of an existing journal without running trials.
pub fn report_only(ctx: &StudyContext) -> Result<StudyReport, RunnerError> {
    let path = ctx.journal_path();
    if !path.exists() {
        return Err(RunnerError::Config(format!("no study journal at {}", path.display())));
    }
    let study = Study::open(&path)?;
    if *study.header() != expected_header(&ctx.settings) {
        return Err(RunnerError::Config(format!("{} was written by a different study", path.display())));
    }
    let baseline = evaluate_everywhere(ctx, &ctx.settings.baseline)?;
    let report = assemble_report(ctx, &study, &baseline)?;
    emit_report(&report, &ctx.settings.output_dir).map_err(io_err(&ctx.settings.output_dir))?;
    Ok(report)
}

/// Corpus statistics for `corpus inspect`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub benchmark: String,
    pub instances: usize,
    pub excluded: usize,
    pub train: usize,
    pub test: usize,
    pub train_documents: usize,
    pub test_only_documents: usize,
    pub train_tokens: usize,
    pub min_document_tokens: usize,
    pub max_document_tokens: usize,
}

pub fn inspect_corpus(settings: &StudySettings) -> Result<CorpusSummary, RunnerError> {
    let instances = load_benchmark(&settings.dataset_path, settings.adapter)?;
    let split = load_split(settings)?;
    let train_docs = corpus_documents(&split.train);
    let train_hashes: std::collections::BTreeSet<&str> = train_docs.iter().map(|d| d.content_hash.as_str()).collect();
    let test_only = corpus_documents(&split.test).iter().filter(|d| !train_hashes.contains(d.content_hash.as_str())).count();
    let tokens: Vec<usize> = train_docs.iter().map(|d| count_tokens(&d.text)).collect();
    Ok(CorpusSummary {
        benchmark: settings.benchmark.clone(),
        instances: instances.len(),
        excluded: instances.iter().filter(|i| split.exclusion_ids.contains(&i.id)).count(),
        train: split.train.len(),
        test: split.test.len(),
        train_documents: train_docs.len(),
        test_only_documents: test_only,
        train_tokens: tokens.iter().sum(),
        min_document_tokens: tokens.iter().copied().min().unwrap_or(0),
        max_document_tokens: tokens.iter().copied().max().unwrap_or(0),
    })
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "benchmark            {}", self.benchmark)?;
        writeln!(f, "instances            {} ({} excluded)", self.instances, self.excluded)?;
        writeln!(f, "split                {} train / {} test", self.train, self.test)?;
        writeln!(f, "train documents      {} ({} tokens)", self.train_documents, self.train_tokens)?;
        writeln!(f, "document tokens      {}..{}", self.min_document_tokens, self.max_document_tokens)?;
        write!(f, "test-only documents  {}", self.test_only_documents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(RunnerError::Config("x".into()).exit_code(), 2);
        assert_eq!(RunnerError::Dataset(CorpusError::EmptyDataset).exit_code(), 3);
        assert_eq!(RunnerError::Backend(GatewayError::Fatal("x".into())).exit_code(), 4);
        assert_eq!(RunnerError::from(TrialError::Gateway(GatewayError::Transient("x".into()))).exit_code(), 4);
    }

    #[test]
    fn unknown_prompt_in_space_is_a_config_error() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("studies/toy.toml");
        let settings = StudySettings::load(&path, &["space.qa_prompt.values=[\"default\",\"poetic\"]".into()]).unwrap();
        assert_eq!(load_registry(&settings).unwrap_err().exit_code(), 2);
    }
}
