//! Record/replay cache: key digests, persistence and strict replay.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use graphtune::corpus::corpus_documents;
use graphtune::evaluation::Metric;
use graphtune::gateway::mock::MockBackend;
use graphtune::gateway::replay::{completion_key_material, digest, embedding_key_material, Envelope, ReplayBackend};
use graphtune::gateway::{Backend, CompletionRequest, Decoding, Gateway, GatewayError, Prompt, TemplateRegistry, TemplateRole};
use graphtune::runner::Pipeline;
use graphtune::space::baseline_config;
use graphtune::stores::TrialStores;

/// Digests computed independently with Python's hashlib over the same
/// key material.
#[test]
fn key_digests_match_reference() {
    let cases = [
        (
            completion_key_material("mock-rules-v1", &Decoding::greedy(512), "Answer: Paris"),
            "2fea8415bf0073c6c9bfd35c6d3670ab87cabfc4c274c4426769a5043ff9a927",
        ),
        (
            completion_key_material(
                "gpt-4o-mini|text-embedding-3-small",
                &Decoding::greedy(1024),
                "Extract entities from:\nVell is the capital of Oronia.",
            ),
            "2398e6ab261d3dc9f40fc5d1ee14fbe49504de456008d30a781a7993f6bac434",
        ),
        (
            completion_key_material("m", &Decoding { temperature: 0.7, max_output_tokens: 16 }, ""),
            "5d477588d0b415527d502b6dff8c74224efe3b193440dc2602c8a21fecda9a0a",
        ),
        (
            embedding_key_material("mock-rules-v1", "Vell is the capital of Oronia."),
            "80323d6dcefabf5cb56b43d274a92eb7f0f97f2482573669becc9b8518674d57",
        ),
        (embedding_key_material("m", "naïve café ✓"), "e95d3a8e7a110a5fe91bc42f484345890c4eb14e9cf6b21ac9099d47609d4ac5"),
    ];
    for (material, want) in cases {
        assert_eq!(digest(&material), want, "{material:?}");
    }
}

struct Counting {
    inner: MockBackend,
    calls: Arc<AtomicUsize>,
}

impl Backend for Counting {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn complete(&self, prompt: &Prompt<'_>) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(prompt)
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(text)
    }
}

fn recording(dir: &std::path::Path) -> (Gateway, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let upstream = Counting { inner: MockBackend::default(), calls: calls.clone() };
    (Gateway::new(TemplateRegistry::builtin(), Box::new(ReplayBackend::recording(dir, Box::new(upstream)))), calls)
}

#[test]
fn recorded_requests_replay_without_upstream() {
    let dir = tempfile::tempdir().unwrap();
    let (gw, calls) = recording(dir.path());
    let req = CompletionRequest::new(TemplateRole::QaSystem, "concise").var("question", "Where?").var("context", "Vell is in Oronia.");
    let first = gw.complete(&req).unwrap();
    let vector = gw.embed_text("Vell").unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 2);
    assert_eq!(gw.complete(&req).unwrap(), first);
    assert_eq!(calls.load(Ordering::SeqCst), 2);

    let rendered = gw.render(TemplateRole::QaSystem, "concise", &req.variables).unwrap();
    let key = digest(&completion_key_material("mock-rules-v1", &req.decoding, &rendered));
    let envelope: Envelope = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{key}.json"))).unwrap()).unwrap();
    assert_eq!(envelope.key, key);

    let strict = Gateway::new(TemplateRegistry::builtin(), Box::new(ReplayBackend::strict(dir.path(), "mock-rules-v1")));
    assert_eq!(strict.complete(&req).unwrap(), first);
    assert_eq!(strict.embed_text("Vell").unwrap(), vector);
    assert!(matches!(strict.embed_text("unseen"), Err(GatewayError::CacheMiss(_))));
    let other_model = Gateway::new(TemplateRegistry::builtin(), Box::new(ReplayBackend::strict(dir.path(), "other")));
    assert!(matches!(other_model.complete(&req), Err(GatewayError::CacheMiss(_))));
}

#[test]
fn corrupt_entries_surface_as_parse_failures() {
    let dir = tempfile::tempdir().unwrap();
    let key = digest(&embedding_key_material("mock-rules-v1", "x"));
    std::fs::write(dir.path().join(format!("{key}.json")), "{ not json").unwrap();
    let strict = ReplayBackend::strict(dir.path(), "mock-rules-v1");
    assert!(matches!(strict.embed("x"), Err(GatewayError::ParseFailure(_))));
}

#[test]
fn replayed_trial_equals_mock_trial() {
    let dir = tempfile::tempdir().unwrap();
    let questions = common::tiny_benchmark();
    let docs = corpus_documents(&questions);
    let config = baseline_config();
    let score = |gw: &Gateway| {
        let pipe = Pipeline { gateway: gw, extraction_attempts: 2 };
        pipe.evaluate(&mut TrialStores::new(), &config, Metric::F1, &docs, &questions).unwrap()
    };
    let direct = score(&Gateway::mock());
    let (gw, calls) = recording(dir.path());
    assert_eq!(score(&gw), direct);
    let after_record = calls.load(Ordering::SeqCst);
    assert!(after_record > 0);
    assert_eq!(score(&gw), direct);
    assert_eq!(calls.load(Ordering::SeqCst), after_record);
    let strict = Gateway::new(TemplateRegistry::builtin(), Box::new(ReplayBackend::strict(dir.path(), "mock-rules-v1")));
    assert_eq!(score(&strict), direct);
}
