//! Single-token rating generation against a pluggable [`Backend`].
//!
//! Backends: [`RemoteBackend`] speaks the OpenAI-compatible completion or
//! chat-completion wire format; [`MockBackend`] is an offline test double
//! whose errors are a seeded, label-symmetric corruption of the ground truth.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::Sample;
use crate::error::{BackendError, Error, Result};
use crate::http::{join_url, JsonClient, RetryPolicy};
use crate::io;
use crate::rng::{fnv1a64, mix64, SplitMix64};

/// Generation attempts per sample before recording a parse failure.
pub const MAX_PARSE_ATTEMPTS: u32 = 3;
/// Retry `n` uses seed `seed + RETRY_SEED_STRIDE * n`.
pub const RETRY_SEED_STRIDE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub seed: u64,
}

impl GenerationParams {
    /// top_p 0.9, one new token.
    pub fn new(temperature: f64, seed: u64) -> Self {
        Self {
            temperature,
            top_p: 0.9,
            max_new_tokens: 1,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub model_id: String,
    pub sample_id: String,
    pub raw_token: String,
    pub rating: Option<u8>,
    pub status: PredictionStatus,
    pub attempts: u32,
}

impl Prediction {
    pub fn is_ok(&self) -> bool {
        self.status == PredictionStatus::Ok
    }
}

/// A single `1`..`5` after trimming whitespace; anything else is unparseable.
pub fn parse_rating(raw: &str) -> Option<u8> {
    let mut chars = raw.trim().chars();
    match (chars.next(), chars.next()) {
        (Some(c @ '1'..='5'), None) => Some(c as u8 - b'0'),
        _ => None,
    }
}

/// What a backend sees for one generation call. `params.seed` already
/// includes any retry offset.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub params: GenerationParams,
    pub sample: &'a Sample,
}

pub trait Backend: Send + Sync {
    /// Raw generated text for one request.
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        (**self).generate(request)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        (**self).generate(request)
    }
}

/// Generates and parses one rating, retrying unparseable output with shifted
/// seeds. Transport failures are returned as errors, never as predictions.
pub fn generate_rating(
    model_id: &str,
    sample: &Sample,
    prompt: &str,
    params: &GenerationParams,
    backend: &dyn Backend,
) -> Result<Prediction, BackendError> {
    let mut raw = String::new();
    for attempt in 0..MAX_PARSE_ATTEMPTS {
        let request = GenerationRequest {
            prompt,
            params: params.with_seed(params.seed.wrapping_add(RETRY_SEED_STRIDE * u64::from(attempt))),
            sample,
        };
        raw = backend.generate(&request)?;
        if let Some(rating) = parse_rating(&raw) {
            return Ok(Prediction {
                model_id: model_id.to_string(),
                sample_id: sample.id.clone(),
                raw_token: raw,
                rating: Some(rating),
                status: PredictionStatus::Ok,
                attempts: attempt + 1,
            });
        }
    }
    Ok(Prediction {
        model_id: model_id.to_string(),
        sample_id: sample.id.clone(),
        raw_token: raw,
        rating: None,
        status: PredictionStatus::ParseFailure,
        attempts: MAX_PARSE_ATTEMPTS,
    })
}

/// Offline stand-in for an LLM. Each call emits the true label with
/// probability `1 - p`, otherwise one of the other four labels uniformly,
/// where `p = clamp(noise_floor + temperature_gain * temperature, 0, 0.95)`.
///
/// Randomness is keyed by `(seed, sample id, attempt)`:
/// `SplitMix64::new(fnv1a64(sample_id) ^ mix64(seed) ^ mix64(attempt ^ MOCK_ATTEMPT_SALT))`;
/// the first `next_f64()` decides corruption, the following `below(4)` picks
/// the replacement label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockModelSpec {
    pub noise_floor: f64,
    pub temperature_gain: f64,
}

pub const MOCK_MAX_ERROR: f64 = 0.95;
const MOCK_ATTEMPT_SALT: u64 = 0x6d6f_636b_6174_7400;

impl MockModelSpec {
    pub fn error_probability(&self, temperature: f64) -> f64 {
        (self.noise_floor + self.temperature_gain * temperature).clamp(0.0, MOCK_MAX_ERROR)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_floor) {
            return Err(Error::Config("mock noise floor must be in [0, 1]".into()));
        }
        if !(self.temperature_gain.is_finite() && self.temperature_gain >= 0.0) {
            return Err(Error::Config("mock temperature gain must be >= 0".into()));
        }
        Ok(())
    }
}

/// Rating emitted by the mock for an explicit error probability `p`.
pub fn mock_rating(sample_id: &str, label: u8, seed: u64, attempt: u32, p: f64) -> u8 {
    let key = fnv1a64(sample_id.as_bytes()) ^ mix64(seed) ^ mix64(u64::from(attempt) ^ MOCK_ATTEMPT_SALT);
    let mut rng = SplitMix64::new(key);
    if rng.next_f64() < p {
        let pick = rng.below(4) as u8 + 1;
        // The four labels other than `label`, in ascending order.
        if pick >= label {
            pick + 1
        } else {
            pick
        }
    } else {
        label
    }
}

/// One mock generation at attempt 0.
pub fn mock_generate(model_id: &str, sample: &Sample, params: &GenerationParams, spec: &MockModelSpec) -> Prediction {
    let p = spec.error_probability(params.temperature);
    let rating = mock_rating(&sample.id, sample.label, params.seed, 0, p);
    Prediction {
        model_id: model_id.to_string(),
        sample_id: sample.id.clone(),
        raw_token: rating.to_string(),
        rating: Some(rating),
        status: PredictionStatus::Ok,
        attempts: 1,
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    spec: MockModelSpec,
}

impl MockBackend {
    pub fn new(spec: MockModelSpec) -> Self {
        Self { spec }
    }
}

impl Backend for MockBackend {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let p = self.spec.error_probability(request.params.temperature);
        let rating = mock_rating(&request.sample.id, request.sample.label, request.params.seed, 0, p);
        Ok(rating.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireFormat {
    /// `POST {endpoint}/completions` with a `prompt`.
    Completion,
    /// `POST {endpoint}/chat/completions` with a single user message.
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSpec {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_wire")]
    pub wire: WireFormat,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_wire() -> WireFormat {
    WireFormat::Completion
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: JsonClient,
    url: String,
    model: String,
    wire: WireFormat,
}

impl RemoteBackend {
    pub fn new(spec: &RemoteSpec, retry: RetryPolicy) -> Self {
        let route = match spec.wire {
            WireFormat::Completion => "completions",
            WireFormat::Chat => "chat/completions",
        };
        Self {
            client: JsonClient::new(retry, Duration::from_secs(spec.timeout_secs)),
            url: join_url(&spec.endpoint, route),
            model: spec.model.clone(),
            wire: spec.wire,
        }
    }

    pub fn request_body(&self, prompt: &str, params: &GenerationParams) -> Value {
        let mut body = json!({
            "model": self.model,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_new_tokens,
            "seed": params.seed,
        });
        match self.wire {
            WireFormat::Completion => body["prompt"] = json!(prompt),
            WireFormat::Chat => body["messages"] = json!([{ "role": "user", "content": prompt }]),
        }
        body
    }
}

impl Backend for RemoteBackend {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let body = self.request_body(request.prompt, &request.params);
        let resp = self.client.post(&self.url, &body)?;
        let choice = resp
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
        let text = match self.wire {
            WireFormat::Completion => choice.get("text"),
            WireFormat::Chat => choice.get("message").and_then(|m| m.get("content")),
        };
        text.and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol("choice has no text".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Mock(MockModelSpec),
    Remote(RemoteSpec),
}

impl BackendSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BackendSpec::Mock(m) => m.validate(),
            BackendSpec::Remote(r) if r.endpoint.trim().is_empty() => {
                Err(Error::Config("remote backend requires an endpoint".into()))
            }
            BackendSpec::Remote(_) => Ok(()),
        }
    }

    pub fn build(&self) -> Box<dyn Backend> {
        match self {
            BackendSpec::Mock(m) => Box::new(MockBackend::new(*m)),
            BackendSpec::Remote(r) => Box::new(RemoteBackend::new(r, RetryPolicy::default())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub model_id: String,
    pub max_in_flight: usize,
    /// JSONL file of completed predictions; existing entries for this model
    /// are reused instead of re-queried.
    pub checkpoint: Option<PathBuf>,
    /// Rewrite the checkpoint after this many new completions.
    pub checkpoint_every: usize,
    pub abort_after_consecutive_failures: usize,
}

impl BatchOptions {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            max_in_flight: 4,
            checkpoint: None,
            checkpoint_every: 20,
            abort_after_consecutive_failures: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub model_id: String,
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// Input order; samples whose generation failed are absent.
    pub predictions: Vec<Prediction>,
    pub failures: Vec<SampleFailure>,
    /// Samples sent to the backend during this call (excludes checkpoint hits).
    pub queried: usize,
}

struct BatchState {
    done: HashMap<String, Prediction>,
    failures: HashMap<String, SampleFailure>,
    since_flush: usize,
    consecutive_failures: usize,
    last_error: String,
}

pub type PromptFn<'a> = dyn Fn(&Sample) -> Result<String> + Sync + 'a;

/// Runs one model over `samples` with bounded concurrency. Output order is
/// input order regardless of completion order.
pub fn run_batch(
    samples: &[Sample],
    prompt_fn: &PromptFn<'_>,
    params: &GenerationParams,
    backend: &dyn Backend,
    opts: &BatchOptions,
) -> Result<BatchOutcome> {
    params.validate()?;
    let mut done = HashMap::new();
    if let Some(path) = opts.checkpoint.as_deref().filter(|p| p.exists()) {
        for p in io::read_jsonl::<Prediction>(path)? {
            if p.model_id == opts.model_id {
                done.insert(p.sample_id.clone(), p);
            }
        }
    }
    let pending: Vec<&Sample> = samples.iter().filter(|s| !done.contains_key(&s.id)).collect();
    let state = Mutex::new(BatchState {
        done,
        failures: HashMap::new(),
        since_flush: 0,
        consecutive_failures: 0,
        last_error: String::new(),
    });
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let threshold = opts.abort_after_consecutive_failures.max(1);

    let flush = |st: &BatchState| -> Result<()> {
        match &opts.checkpoint {
            Some(path) => io::write_jsonl(path, samples.iter().filter_map(|s| st.done.get(&s.id))),
            None => Ok(()),
        }
    };

    std::thread::scope(|scope| {
        for _ in 0..opts.max_in_flight.max(1).min(pending.len()) {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = pending.get(i) else { break };
                let outcome = prompt_fn(sample).and_then(|prompt| {
                    generate_rating(&opts.model_id, sample, &prompt, params, backend).map_err(Error::from)
                });
                let mut st = state.lock().unwrap();
                let res = match outcome {
                    Ok(pred) => {
                        st.consecutive_failures = 0;
                        st.done.insert(sample.id.clone(), pred);
                        st.since_flush += 1;
                        if st.since_flush >= opts.checkpoint_every.max(1) {
                            st.since_flush = 0;
                            flush(&st)
                        } else {
                            Ok(())
                        }
                    }
                    Err(Error::Backend(e)) => {
                        log::warn!("{} {}: {e}", opts.model_id, sample.id);
                        st.consecutive_failures += 1;
                        st.last_error = e.to_string();
                        st.failures.insert(
                            sample.id.clone(),
                            SampleFailure {
                                model_id: opts.model_id.clone(),
                                sample_id: sample.id.clone(),
                                error: e.to_string(),
                            },
                        );
                        if st.consecutive_failures >= threshold {
                            abort.store(true, Ordering::SeqCst);
                        }
                        Ok(())
                    }
                    Err(other) => Err(other),
                };
                if let Err(e) = res {
                    fatal.lock().unwrap().get_or_insert(e);
                    abort.store(true, Ordering::SeqCst);
                }
            });
        }
    });

    let st = state.into_inner().unwrap();
    flush(&st)?;
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    if abort.load(Ordering::SeqCst) {
        return Err(Error::BatchAborted {
            model_id: opts.model_id.clone(),
            consecutive: st.consecutive_failures,
            last_error: st.last_error,
        });
    }
    let predictions = samples.iter().filter_map(|s| st.done.get(&s.id).cloned()).collect();
    let failures = samples.iter().filter_map(|s| st.failures.get(&s.id).cloned()).collect();
    Ok(BatchOutcome {
        predictions,
        failures,
        queried: pending.len(),
    })
}
