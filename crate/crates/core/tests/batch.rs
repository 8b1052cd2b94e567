mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use creens_core::dataset::Sample;
use creens_core::ensemble::{self, EnsembleConfig, RunOptions};
use creens_core::inference::{
    run_batch, Backend, BatchOptions, GenerationParams, GenerationRequest, MockBackend, MockModelSpec,
    PredictionStatus, RemoteBackend, RemoteSpec, WireFormat,
};
use creens_core::prompting::PromptTemplate;
use creens_core::selection::{ExampleSet, Strategy};
use creens_core::{BackendError, Error, RetryPolicy};
use serde_json::json;

use common::{synthetic_samples, StubServer};

fn prompt(s: &Sample) -> creens_core::Result<String> {
    PromptTemplate::default().render(&[("Great food", 5)], &s.text)
}

/// Counts calls and answers with the true label after a per-call delay that
/// shrinks with the sample index, so completions arrive out of order.
struct SlowTruth {
    calls: AtomicUsize,
}

impl Backend for SlowTruth {
    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let idx: u64 = r.sample.id[1..].parse().unwrap();
        std::thread::sleep(Duration::from_millis(20u64.saturating_sub(idx * 5)));
        Ok(format!(" {}", r.sample.label))
    }
}

/// Succeeds for the first `ok` calls, then fails with a transport error.
struct FailAfter {
    ok: usize,
    calls: AtomicUsize,
}

impl Backend for FailAfter {
    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) < self.ok {
            Ok(r.sample.label.to_string())
        } else {
            Err(BackendError::Transport("connection reset".into()))
        }
    }
}

fn samples(n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| Sample::new(format!("s{i}"), format!("review {i}"), (i % 5 + 1) as u8))
        .collect()
}

#[test]
fn output_follows_input_order() {
    let backend = SlowTruth {
        calls: AtomicUsize::new(0),
    };
    let test = samples(3);
    let out = run_batch(
        &test,
        &prompt,
        &GenerationParams::new(0.8, 1),
        &backend,
        &BatchOptions::new("M1"),
    )
    .unwrap();
    let ids: Vec<_> = out.predictions.iter().map(|p| p.sample_id.as_str()).collect();
    assert_eq!(ids, ["s0", "s1", "s2"]);
    assert!(out.predictions.iter().all(|p| p.is_ok()));
}

#[test]
fn resume_only_queries_missing_samples() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("M1.jsonl");
    let test = samples(3);
    let mut opts = BatchOptions::new("M1");
    opts.checkpoint = Some(ckpt.clone());
    opts.checkpoint_every = 1;
    opts.max_in_flight = 1;
    opts.abort_after_consecutive_failures = 1;

    // Simulated crash: the third request fails and the batch aborts.
    let first = FailAfter {
        ok: 2,
        calls: AtomicUsize::new(0),
    };
    let err = run_batch(&test, &prompt, &GenerationParams::new(0.8, 1), &first, &opts).unwrap_err();
    assert!(matches!(err, Error::BatchAborted { ref model_id, .. } if model_id == "M1"));

    let second = SlowTruth {
        calls: AtomicUsize::new(0),
    };
    let out = run_batch(&test, &prompt, &GenerationParams::new(0.8, 1), &second, &opts).unwrap();
    assert_eq!(second.calls.load(Ordering::SeqCst), 1);
    assert_eq!(out.queried, 1);
    assert_eq!(out.predictions.len(), 3);
    let on_disk: Vec<creens_core::Prediction> = creens_core::io::read_jsonl(&ckpt).unwrap();
    assert_eq!(on_disk, out.predictions);
}

#[test]
fn http_500_is_reported_not_predicted() {
    let server = StubServer::start(Box::new(|_, body| {
        let prompt = body["prompt"].as_str().unwrap_or_default();
        if common::user_review(prompt) == "review 1" {
            (500, json!({"error": "boom"}))
        } else {
            (200, json!({"choices": [{"text": "3"}]}))
        }
    }));
    let spec = RemoteSpec {
        endpoint: server.base_url.clone(),
        model: "stub".into(),
        wire: WireFormat::Completion,
        timeout_secs: 5,
    };
    let backend = RemoteBackend::new(
        &spec,
        RetryPolicy {
            attempts: 3,
            base_backoff: Duration::from_millis(1),
        },
    );
    let out = run_batch(
        &samples(3),
        &prompt,
        &GenerationParams::new(0.8, 1),
        &backend,
        &BatchOptions::new("M2"),
    )
    .unwrap();
    let ids: Vec<_> = out.predictions.iter().map(|p| p.sample_id.as_str()).collect();
    assert_eq!(ids, ["s0", "s2"]);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].sample_id, "s1");
    assert!(out.failures[0].error.contains("500"));
    // Three HTTP attempts for the failing sample, one for each other.
    assert_eq!(server.recorded().len(), 5);
}

#[test]
fn chat_wire_format() {
    let server = StubServer::start(Box::new(|path, body| {
        assert_eq!(path, "/v1/chat/completions");
        assert_eq!(body["messages"][0]["role"], "user");
        (
            200,
            json!({"choices": [{"message": {"role": "assistant", "content": "5"}}]}),
        )
    }));
    let spec = RemoteSpec {
        endpoint: server.base_url.clone(),
        model: "stub".into(),
        wire: WireFormat::Chat,
        timeout_secs: 5,
    };
    let backend = RemoteBackend::new(&spec, RetryPolicy::default());
    let out = run_batch(
        &samples(2),
        &prompt,
        &GenerationParams::new(1.5, 2),
        &backend,
        &BatchOptions::new("M1"),
    )
    .unwrap();
    assert!(out.predictions.iter().all(|p| p.rating == Some(5)));
}

#[test]
fn unparseable_remote_output_is_a_parse_failure() {
    let server = StubServer::start(Box::new(|_, _| (200, json!({"choices": [{"text": "ok"}]}))));
    let spec = RemoteSpec {
        endpoint: server.base_url.clone(),
        model: "stub".into(),
        wire: WireFormat::Completion,
        timeout_secs: 5,
    };
    let backend = RemoteBackend::new(&spec, RetryPolicy::default());
    let out = run_batch(
        &samples(1),
        &prompt,
        &GenerationParams::new(0.8, 4),
        &backend,
        &BatchOptions::new("M1"),
    )
    .unwrap();
    let p = &out.predictions[0];
    assert_eq!(
        (p.status, p.attempts, p.raw_token.as_str()),
        (PredictionStatus::ParseFailure, 3, "ok")
    );
    let seeds: Vec<u64> = server
        .recorded()
        .iter()
        .map(|r| r.body["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, vec![4, 1004, 2004]);
}

fn example_set(k: usize) -> ExampleSet {
    ExampleSet {
        strategy: Strategy::Rse,
        k,
        seed: 0,
        examples: (0..k)
            .map(|i| Sample::new(format!("ex{i}"), format!("example {i}"), (i % 5 + 1) as u8))
            .collect(),
        cluster_assignments: None,
    }
}

#[test]
fn ensemble_shape_and_determinism() {
    let test = synthetic_samples(10, 3);
    let cfg = EnsembleConfig::new(example_set(5), GenerationParams::new(1.5, 0));
    let backend = MockBackend::new(MockModelSpec {
        noise_floor: 0.2,
        temperature_gain: 0.1,
    });
    let run = ensemble::run_ensemble(
        &cfg,
        &test,
        &PromptTemplate::default(),
        &backend,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(run.records.len(), 10);
    assert!(run.records.iter().all(|r| r.per_model.len() == 5 && r.n_valid == 5));
    let again = ensemble::run_ensemble(
        &cfg,
        &test,
        &PromptTemplate::default(),
        &backend,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(run.records, again.records);
}

/// Model seed 3 never produces a digit.
struct BrokenModelThree(MockBackend);

impl Backend for BrokenModelThree {
    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, BackendError> {
        if r.params.seed % 1000 == 3 {
            Ok("N/A".into())
        } else {
            self.0.generate(r)
        }
    }
}

#[test]
fn one_failing_model_leaves_four_valid() {
    let test = synthetic_samples(10, 5);
    let cfg = EnsembleConfig::new(example_set(5), GenerationParams::new(0.8, 0));
    let backend = BrokenModelThree(MockBackend::new(MockModelSpec {
        noise_floor: 0.3,
        temperature_gain: 0.0,
    }));
    let run = ensemble::run_ensemble(
        &cfg,
        &test,
        &PromptTemplate::default(),
        &backend,
        &RunOptions::default(),
    )
    .unwrap();
    for r in &run.records {
        assert_eq!(r.n_valid, 4);
        assert_eq!(r.per_model["M3"].status, PredictionStatus::ParseFailure);
        assert!(r.median_rating.is_some());
        assert!(r.n_unique <= r.n_valid);
    }
}

/// Records every (seed, exemplar-bearing prompt) pair it sees.
struct PairLog(Mutex<Vec<(u64, String)>>);

impl Backend for PairLog {
    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let ex = r
            .prompt
            .lines()
            .find(|l| l.starts_with("User review: example"))
            .unwrap_or_default()
            .to_string();
        self.0.lock().unwrap().push((r.params.seed, ex));
        Ok("3".into())
    }
}

#[test]
fn model_i_uses_example_i_and_seed_i() {
    let test = synthetic_samples(2, 1);
    let cfg = EnsembleConfig::new(example_set(5), GenerationParams::new(0.8, 0));
    let backend = PairLog(Mutex::new(vec![]));
    ensemble::run_ensemble(
        &cfg,
        &test,
        &PromptTemplate::default(),
        &backend,
        &RunOptions::default(),
    )
    .unwrap();
    let log = backend.0.lock().unwrap();
    for (seed, ex) in log.iter() {
        assert_eq!(ex, &format!("User review: example {}", seed - 1));
    }
    assert_eq!(log.len(), 10);
}
