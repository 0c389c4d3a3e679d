//! Study state, TPE suggestions and the on-disk trial journal.

pub mod journal;
pub mod synthetic;
pub mod tpe;

use serde::{Deserialize, Serialize};

use crate::evaluation::{Metric, QuestionScore};
use crate::rng::SeededRng;
use crate::space::{validate_config, ConfigError, ParamValue, PipelineConfig, SearchSpace};
pub use journal::{JournalError, StudyHeader};
pub use tpe::{categorical_density, numeric_density, TpeSettings};

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("study is closed")]
    StudyClosed,
    #[error("no complete trials")]
    NoCompleteTrials,
    #[error(transparent)]
    OutOfDomain(#[from] ConfigError),
    #[error("objective {0} is outside [0, 1]")]
    ObjectiveOutOfRange(f64),
    #[error("invalid optimizer settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub config: PipelineConfig,
    pub state: TrialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default)]
    pub per_question: Vec<QuestionScore>,
    /// Milliseconds since the Unix epoch for live runs; a logical tick for
    /// deterministic backends.
    pub started_at: u64,
    pub finished_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug)]
pub struct Study {
    header: StudyHeader,
    trials: Vec<TrialRecord>,
    closed: bool,
    journal: Option<journal::Journal>,
}

impl Study {
    /// An in-memory study. `base` supplies the parameters the space leaves
    /// untuned.
    pub fn new(
        study_id: &str,
        space: SearchSpace,
        metric: Metric,
        seed: u64,
        base: PipelineConfig,
        settings: TpeSettings,
    ) -> Result<Self, OptimizerError> {
        settings.validate().map_err(OptimizerError::Settings)?;
        let header = StudyHeader::new(study_id, space, metric, seed, base, settings);
        Ok(Study { header, trials: Vec::new(), closed: false, journal: None })
    }

    pub fn header(&self) -> &StudyHeader {
        &self.header
    }

    pub fn study_id(&self) -> &str {
        &self.header.study_id
    }

    pub fn space(&self) -> &SearchSpace {
        &self.header.space
    }

    pub fn metric(&self) -> Metric {
        self.header.metric
    }

    pub fn seed(&self) -> u64 {
        self.header.seed
    }

    pub fn settings(&self) -> &TpeSettings {
        &self.header.settings
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Refuses further suggestions and records, and releases the journal.
    pub fn close(&mut self) {
        self.closed = true;
        self.journal = None;
    }

    pub fn completed(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.state == TrialState::Complete)
    }

    /// Completed trials best first: objective descending, then trial index.
    fn ranked(&self) -> Vec<&TrialRecord> {
        let mut ranked: Vec<&TrialRecord> = self.completed().collect();
        ranked.sort_by(|a, b| {
            b.objective.unwrap_or(0.0).total_cmp(&a.objective.unwrap_or(0.0)).then(a.trial_index.cmp(&b.trial_index))
        });
        ranked
    }

    /// Good and bad groups: the top `ceil(gamma * n)` completed trials and
    /// the rest.
    pub fn partition(&self) -> (Vec<&TrialRecord>, Vec<&TrialRecord>) {
        let mut ranked = self.ranked();
        let bad = ranked.split_off(self.header.settings.n_good(ranked.len()).min(ranked.len()));
        (ranked, bad)
    }

    /// Next configuration to evaluate. Uniform while fewer than
    /// `n_startup` trials are complete, TPE afterwards. Draws come from
    /// stream `trials.len()` of the study seed, so a given history always
    /// yields the same suggestion.
    pub fn suggest(&self) -> Result<PipelineConfig, OptimizerError> {
        if self.closed {
            return Err(OptimizerError::StudyClosed);
        }
        let mut rng = SeededRng::with_stream(self.header.seed, self.trials.len() as u64);
        let n_complete = self.completed().count();
        let space = &self.header.space;
        let values: Vec<ParamValue> = if n_complete == 0 || n_complete < self.header.settings.n_startup {
            space.dimensions().iter().map(|d| tpe::sample_uniform(d, &mut rng)).collect()
        } else {
            let (good, bad) = self.partition();
            space
                .dimensions()
                .iter()
                .map(|d| {
                    let pick = |group: &[&TrialRecord]| group.iter().filter_map(|t| t.config.get(d.name())).collect::<Vec<_>>();
                    let (g, b) = (pick(&good), pick(&bad));
                    tpe::sample_tpe(d, &g.iter().collect::<Vec<_>>(), &b.iter().collect::<Vec<_>>(), &self.header.settings, &mut rng)
                })
                .collect()
        };
        let config = PipelineConfig::from_values(&self.header.base, space, &values)?;
        validate_config(&config, space)?;
        Ok(config)
    }

    /// Appends a complete trial stamped with logical times.
    pub fn record(&mut self, config: PipelineConfig, objective: f64, per_question: Vec<QuestionScore>) -> Result<&TrialRecord, OptimizerError> {
        let tick = self.trials.len() as u64;
        self.record_timed(config, objective, per_question, tick, tick)
    }

    pub fn record_timed(
        &mut self,
        config: PipelineConfig,
        objective: f64,
        per_question: Vec<QuestionScore>,
        started_at: u64,
        finished_at: u64,
    ) -> Result<&TrialRecord, OptimizerError> {
        if !(0.0..=1.0).contains(&objective) {
            return Err(OptimizerError::ObjectiveOutOfRange(objective));
        }
        validate_config(&config, &self.header.space)?;
        self.append(TrialRecord {
            trial_index: self.trials.len(),
            config,
            state: TrialState::Complete,
            objective: Some(objective),
            per_question,
            started_at,
            finished_at,
            note: None,
        })
    }

    pub fn record_failed(&mut self, config: PipelineConfig, note: &str, started_at: u64, finished_at: u64) -> Result<&TrialRecord, OptimizerError> {
        validate_config(&config, &self.header.space)?;
        self.append(TrialRecord {
            trial_index: self.trials.len(),
            config,
            state: TrialState::Failed,
            objective: None,
            per_question: Vec::new(),
            started_at,
            finished_at,
            note: Some(note.to_string()),
        })
    }

    fn append(&mut self, record: TrialRecord) -> Result<&TrialRecord, OptimizerError> {
        if self.closed {
            return Err(OptimizerError::StudyClosed);
        }
        if let Some(journal) = &mut self.journal {
            journal.append(&record)?;
        }
        self.trials.push(record);
        Ok(self.trials.last().expect("just pushed"))
    }

    /// Highest objective; the lowest index wins ties.
    pub fn best_trial(&self) -> Result<&TrialRecord, OptimizerError> {
        self.ranked().first().copied().ok_or(OptimizerError::NoCompleteTrials)
    }

    /// `(trial_index, best objective so far)` for every trial once at least
    /// one has completed; failed trials repeat the previous maximum.
    pub fn running_max(&self) -> Vec<(usize, f64)> {
        let mut best: Option<f64> = None;
        let mut out = Vec::new();
        for t in &self.trials {
            if let Some(v) = t.objective.filter(|_| t.state == TrialState::Complete) {
                best = Some(best.map_or(v, |b| b.max(v)));
            }
            if let Some(b) = best {
                out.push((t.trial_index, b));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Strategy;
    use crate::space::{baseline_config, default_search_space};

    fn study(seed: u64) -> Study {
        Study::new("t", default_search_space(), Metric::F1, seed, baseline_config(), TpeSettings::default()).unwrap()
    }

    fn on_grid() -> PipelineConfig {
        PipelineConfig { chunk_size: 1000, ..baseline_config() }
    }

    #[test]
    fn startup_suggestions_are_in_space_and_seeded() {
        let s = study(3);
        let a = s.suggest().unwrap();
        assert_eq!(a, study(3).suggest().unwrap());
        assert!(validate_config(&a, s.space()).is_ok());
    }

    #[test]
    fn record_appends_and_checks_range() {
        let mut s = study(1);
        s.record(on_grid(), 0.5, vec![]).unwrap();
        assert_eq!(s.trials().len(), 1);
        assert!(matches!(s.record(on_grid(), 1.2, vec![]), Err(OptimizerError::ObjectiveOutOfRange(_))));
        let bad = PipelineConfig { top_k: 21, ..on_grid() };
        assert!(matches!(s.record(bad, 0.1, vec![]), Err(OptimizerError::OutOfDomain(_))));
        s.close();
        assert!(matches!(s.record(on_grid(), 0.1, vec![]), Err(OptimizerError::StudyClosed)));
        assert!(matches!(s.suggest(), Err(OptimizerError::StudyClosed)));
    }

    #[test]
    fn best_trial_tie_breaks_on_index() {
        let mut s = study(1);
        assert!(matches!(s.best_trial(), Err(OptimizerError::NoCompleteTrials)));
        for v in [0.2, 0.9, 0.9] {
            s.record(on_grid(), v, vec![]).unwrap();
        }
        assert_eq!(s.best_trial().unwrap().trial_index, 1);
        let mut failed = study(1);
        failed.record_failed(on_grid(), "boom", 0, 0).unwrap();
        assert!(matches!(failed.best_trial(), Err(OptimizerError::NoCompleteTrials)));
    }

    #[test]
    fn running_max_examples() {
        let mut s = study(1);
        assert!(s.running_max().is_empty());
        for v in [0.1, 0.3, 0.2] {
            s.record(on_grid(), v, vec![]).unwrap();
        }
        s.record_failed(on_grid(), "x", 3, 3).unwrap();
        let values: Vec<f64> = s.running_max().into_iter().map(|(_, v)| v).collect();
        assert_eq!(values, vec![0.1, 0.3, 0.3, 0.3]);
    }

    #[test]
    fn equal_objectives_still_suggest() {
        let mut s = study(5);
        for _ in 0..12 {
            let c = s.suggest().unwrap();
            s.record(c, 0.5, vec![]).unwrap();
        }
        let c = s.suggest().unwrap();
        assert!(validate_config(&c, s.space()).is_ok());
    }

    #[test]
    fn partition_sizes() {
        let mut s = study(2);
        for i in 0..10 {
            s.record(on_grid(), i as f64 / 10.0, vec![]).unwrap();
        }
        let (good, bad) = s.partition();
        assert_eq!((good.len(), bad.len()), (3, 7));
        assert_eq!(good.iter().map(|t| t.trial_index).collect::<Vec<_>>(), vec![9, 8, 7]);
    }

    #[test]
    fn tpe_prefers_the_better_category() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut s = study(seed);
            for i in 0..20 {
                let graph = i % 2 == 0;
                let config = PipelineConfig {
                    search_type: if graph { Strategy::GraphCompletion } else { Strategy::ChunkCompletion },
                    top_k: 1 + (i % 20),
                    ..on_grid()
                };
                s.record(config, if graph { 0.9 } else { 0.1 }, vec![]).unwrap();
            }
            if s.suggest().unwrap().search_type == Strategy::GraphCompletion {
                hits += 1;
            }
        }
        assert!(hits >= 90, "{hits}/100");
    }
}
