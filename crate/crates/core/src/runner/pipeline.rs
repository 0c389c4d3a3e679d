//! One trial: build the stores from training documents, answer a question
//! set and score it.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::corpus::{CorpusDocument, QaInstance};
use crate::evaluation::{aggregate, exact_match, llm_correctness, token_f1, Metric, QuestionScore};
use crate::gateway::{Gateway, GatewayError};
use crate::ingest::{chunk_document, extract_graph_fragment, merge_fragments, summarize_chunk, Chunk, ExtractionError, GraphFragment, IntegrityError};
use crate::retrieval::{answer, retrieve_or_empty, RetrievalError};
use crate::space::{PipelineConfig, TaskGetter};
use crate::stores::{Collection, StoreError, TrialStores};

#[derive(Debug, thiserror::Error)]
pub enum TrialError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("graph integrity: {0}")]
    Integrity(#[from] IntegrityError),
}

/// Statistics of one store build.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub documents: usize,
    pub chunks: usize,
    pub malformed_chunks: usize,
    pub summaries: usize,
}

/// An answered question, before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Answered {
    pub instance_id: String,
    pub prediction: String,
    pub context_items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub answers: Vec<Answered>,
    pub per_question: Vec<QuestionScore>,
    pub objective: f64,
}

pub struct Pipeline<'a> {
    pub gateway: &'a Gateway,
    pub extraction_attempts: usize,
}

impl Pipeline<'_> {
    /// Resets `stores` and fills them from `docs` under `config`.
    pub fn build(&self, stores: &mut TrialStores, config: &PipelineConfig, docs: &[CorpusDocument]) -> Result<BuildStats, TrialError> {
        stores.reset_all();
        let chunks: Vec<Chunk> = docs.iter().flat_map(|d| chunk_document(d, config.chunk_size as usize)).collect();
        let extracted: Vec<(GraphFragment, bool)> = chunks
            .par_iter()
            .map(|c| match extract_graph_fragment(c, &config.graph_prompt, self.gateway, self.extraction_attempts) {
                Ok(f) => Ok((f, false)),
                Err(ExtractionError::MalformedExtraction { chunk_id, attempts, reason }) => {
                    log::warn!("chunk {chunk_id}: no usable extraction after {attempts} attempts ({reason})");
                    Ok((GraphFragment::empty(&c.chunk_id), true))
                }
                Err(ExtractionError::Gateway(e)) => Err(e),
            })
            .collect::<Result<_, GatewayError>>()?;
        let malformed_chunks = extracted.iter().filter(|(_, malformed)| *malformed).count();
        let fragments: Vec<GraphFragment> = extracted.into_iter().map(|(f, _)| f).collect();
        let summaries: Vec<(String, String)> = match config.task_getter {
            TaskGetter::WithSummaries => chunks
                .par_iter()
                .map(|c| summarize_chunk(c, self.gateway).map(|s| (c.chunk_id.clone(), s)))
                .collect::<Result<_, _>>()?,
            TaskGetter::WithoutSummaries => Vec::new(),
        };
        let mut graph = merge_fragments(&fragments);
        graph.summaries = summaries.iter().cloned().collect();
        let chunk_ids: BTreeSet<String> = chunks.iter().map(|c| c.chunk_id.clone()).collect();
        graph.check_integrity(&chunk_ids)?;
        let node_items: Vec<(String, String)> =
            graph.nodes.values().map(|n| (n.node_id.clone(), format!("{}: {}", n.name, n.description))).collect();
        stores.load_graph(graph);
        let chunk_items: Vec<(String, String)> = chunks.iter().map(|c| (c.chunk_id.clone(), c.text.clone())).collect();
        stores.index_items(Collection::Chunks, &chunk_items, self.gateway)?;
        stores.index_items(Collection::Summaries, &summaries, self.gateway)?;
        stores.index_items(Collection::Nodes, &node_items, self.gateway)?;
        stores.record_chunks(&chunks);
        Ok(BuildStats { documents: docs.len(), chunks: chunks.len(), malformed_chunks, summaries: summaries.len() })
    }

    /// Answers `questions` against frozen stores. Strategies that do not
    /// generate return the rendered context as the prediction.
    pub fn answer_all(&self, stores: &TrialStores, config: &PipelineConfig, questions: &[QaInstance]) -> Result<Vec<Answered>, TrialError> {
        questions
            .par_iter()
            .map(|q| {
                let bundle = retrieve_or_empty(&q.question, config.search_type, config.top_k as usize, stores, self.gateway)?;
                let prediction = if bundle.generate {
                    answer(&q.question, &bundle, &config.qa_prompt, self.gateway)?
                } else {
                    bundle.rendered_context.clone()
                };
                Ok(Answered { instance_id: q.id.clone(), prediction, context_items: bundle.items.len() })
            })
            .collect()
    }

    /// Scores answers under `metric`, in question order.
    pub fn score(&self, metric: Metric, questions: &[QaInstance], answers: &[Answered]) -> Vec<QuestionScore> {
        questions
            .par_iter()
            .zip(answers)
            .map(|(q, a)| match metric {
                Metric::Em => QuestionScore::new(&q.id, metric, exact_match(&a.prediction, &q.gold_answer)),
                Metric::F1 => QuestionScore::new(&q.id, metric, token_f1(&a.prediction, &q.gold_answer)),
                Metric::Correctness => {
                    let (value, note) = llm_correctness(self.gateway, "default", &q.question, &a.prediction, &q.gold_answer, &q.aliases);
                    QuestionScore { error_note: note, ..QuestionScore::new(&q.id, metric, value) }
                }
            })
            .collect()
    }

    /// Answers and scores `questions` against already built stores.
    pub fn evaluate_built(
        &self,
        stores: &TrialStores,
        config: &PipelineConfig,
        metric: Metric,
        questions: &[QaInstance],
    ) -> Result<Evaluation, TrialError> {
        let answers = self.answer_all(stores, config, questions)?;
        let per_question = self.score(metric, questions, &answers);
        let objective = aggregate(&per_question).unwrap_or(0.0);
        Ok(Evaluation { answers, per_question, objective })
    }

    /// Builds from `docs`, then answers and scores `questions`.
    pub fn evaluate(
        &self,
        stores: &mut TrialStores,
        config: &PipelineConfig,
        metric: Metric,
        docs: &[CorpusDocument],
        questions: &[QaInstance],
    ) -> Result<Evaluation, TrialError> {
        self.build(stores, config, docs)?;
        self.evaluate_built(stores, config, metric, questions)
    }
}

/// Chunks in `stores` whose document is not among `allowed`.
pub fn foreign_chunks(stores: &TrialStores, allowed: &[CorpusDocument]) -> Vec<String> {
    let allowed: BTreeSet<&str> = allowed.iter().map(|d| d.doc_id.as_str()).collect();
    stores
        .metadata()
        .chunks
        .iter()
        .filter(|(_, row)| !allowed.contains(row.doc_id.as_str()))
        .map(|(id, _)| id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_documents, Passage};
    use crate::gateway::TemplateRole;
    use crate::retrieval::Strategy;
    use crate::space::baseline_config;

    fn instance(id: &str, q: &str, gold: &str, passages: &[(&str, &str)]) -> QaInstance {
        QaInstance {
            id: id.into(),
            question: q.into(),
            gold_answer: gold.into(),
            aliases: vec![],
            passages: passages.iter().map(|(t, b)| Passage { title: t.to_string(), body: b.to_string() }).collect(),
        }
    }

    fn fixture() -> Vec<QaInstance> {
        vec![
            instance("a", "What is Vell the capital of?", "Oronia", &[("Vell", "Vell is the capital of Oronia. Vell lies on the river Tam.")]),
            instance("b", "Which river flows through Vell?", "Tam", &[("Vell", "Vell is the capital of Oronia. Vell lies on the river Tam.")]),
        ]
    }

    #[test]
    fn build_counts_and_summary_toggle() {
        let gw = Gateway::mock();
        let pipe = Pipeline { gateway: &gw, extraction_attempts: 2 };
        let docs = corpus_documents(&fixture());
        let mut stores = TrialStores::new();
        let stats = pipe.build(&mut stores, &baseline_config(), &docs).unwrap();
        assert_eq!(stats.chunks, 1);
        assert_eq!(stats.summaries, 1);
        assert_eq!(stores.counts().summary_vectors, 1);
        assert!(stores.counts().nodes > 0);

        let before = gw.calls(TemplateRole::Summarization);
        let cfg = PipelineConfig { task_getter: TaskGetter::WithoutSummaries, ..baseline_config() };
        pipe.build(&mut stores, &cfg, &docs).unwrap();
        assert_eq!(gw.calls(TemplateRole::Summarization), before);
        assert_eq!(stores.counts().summary_vectors, 0);
        assert!(foreign_chunks(&stores, &docs).is_empty());
        assert_eq!(foreign_chunks(&stores, &[]).len(), 1);
    }

    #[test]
    fn evaluation_scores_every_question_in_order() {
        let gw = Gateway::mock();
        let pipe = Pipeline { gateway: &gw, extraction_attempts: 2 };
        let qs = fixture();
        let docs = corpus_documents(&qs);
        let mut stores = TrialStores::new();
        for strategy in Strategy::ALL {
            let cfg = PipelineConfig { search_type: strategy, top_k: 3, ..baseline_config() };
            let ev = pipe.evaluate(&mut stores, &cfg, Metric::F1, &docs, &qs).unwrap();
            let ids: Vec<&str> = ev.per_question.iter().map(|s| s.instance_id.as_str()).collect();
            assert_eq!(ids, vec!["a", "b"], "{strategy}");
            assert!((0.0..=1.0).contains(&ev.objective));
        }
    }
}
