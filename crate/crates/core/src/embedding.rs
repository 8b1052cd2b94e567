//! Sentence embeddings behind a pluggable [`Embedder`].
//!
//! Two implementations ship: [`RemoteEmbedder`], a client for an
//! OpenAI-compatible `/embeddings` route, and [`HashEmbedder`], an offline
//! embedder that mean-pools per-token vectors derived from a seeded hash.
//! The hash embedder is a pure function of the text, so tests and mock
//! pipelines are reproducible without any model.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{BackendError, Error, Result};
use crate::http::{join_url, JsonClient, RetryPolicy};
use crate::rng::{fnv1a64, mix64};

/// Fixed-length sentence vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn squared_distance(&self, other: &Embedding) -> f64 {
        squared_distance(&self.values, &other.values)
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.squared_distance(other).sqrt()
    }

    /// Scales to unit Euclidean norm; zero vectors are left as is.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
        self
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Component-wise mean of token vectors.
pub fn mean_pool(tokens: &[Embedding]) -> Result<Embedding> {
    let first = tokens
        .first()
        .ok_or(Error::Empty("mean_pool needs at least one vector"))?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for t in tokens {
        if t.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: t.dim(),
            });
        }
        acc.iter_mut().zip(&t.values).for_each(|(a, v)| *a += v);
    }
    let n = tokens.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(Embedding::new(acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    Remote,
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    pub dim: usize,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_batch_size() -> usize {
    64
}

fn default_in_flight() -> usize {
    4
}

/// Sentence-embedding width of the reference MiniLM encoder.
pub const DEFAULT_DIM: usize = 384;

impl EmbedderSpec {
    pub fn deterministic(dim: usize) -> Self {
        Self {
            kind: EmbedderKind::DeterministicTest,
            endpoint: None,
            model_name: None,
            dim,
            normalize: false,
            batch_size: default_batch_size(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: Option<String>, dim: usize) -> Self {
        Self {
            kind: EmbedderKind::Remote,
            endpoint: Some(endpoint.into()),
            model_name: model,
            ..Self::deterministic(dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(Error::Config(
                "embedding batch size and in-flight limit must be positive".into(),
            ));
        }
        if self.kind == EmbedderKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Error::Config("remote embedder requires an endpoint".into()));
        }
        Ok(())
    }
}

pub trait Embedder: Send + Sync {
    /// Raw (unnormalized) vectors, one per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

/// Embeds `texts` with the embedder described by `spec`, checking dimensions
/// and applying optional normalization.
pub fn embed_batch(texts: &[String], spec: &EmbedderSpec) -> Result<Vec<Embedding>> {
    spec.validate()?;
    match spec.kind {
        EmbedderKind::DeterministicTest => embed_with(&HashEmbedder::new(spec.dim), texts, spec),
        EmbedderKind::Remote => embed_with(&RemoteEmbedder::from_spec(spec)?, texts, spec),
    }
}

pub fn embed_with(embedder: &dyn Embedder, texts: &[String], spec: &EmbedderSpec) -> Result<Vec<Embedding>> {
    if texts.is_empty() {
        return Err(Error::Empty("embed_batch needs at least one text"));
    }
    let vectors = embedder.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::LengthMismatch {
            left: texts.len(),
            right: vectors.len(),
        });
    }
    vectors
        .into_iter()
        .map(|v| {
            if v.dim() != spec.dim {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim,
                    actual: v.dim(),
                });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("embedding contains non-finite values".into()));
            }
            Ok(if spec.normalize { v.normalized() } else { v })
        })
        .collect()
}

/// Offline embedder: lowercase alphanumeric tokens each map to a
/// pseudo-random vector in `[-1, 1)^dim`, and the sentence vector is their
/// mean. Texts sharing vocabulary land near each other.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

const HASH_EMBEDDER_SALT: u64 = 0x6372_6565_6e73_0001;

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    fn token_vector(&self, token: &str) -> Embedding {
        let base = mix64(fnv1a64(token.as_bytes()) ^ HASH_EMBEDDER_SALT);
        let values = (0..self.dim as u64)
            .map(|i| {
                let bits = mix64(base.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
                (bits >> 11) as f64 / (1u64 << 52) as f64 - 1.0
            })
            .collect();
        Embedding::new(values)
    }

    pub fn embed_one(&self, text: &str) -> Embedding {
        let lowered = text.to_lowercase();
        let mut tokens: Vec<Embedding> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| self.token_vector(t))
            .collect();
        if tokens.is_empty() {
            tokens.push(self.token_vector(text));
        }
        mean_pool(&tokens).expect("token vectors share one dimension")
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for `POST {endpoint}/embeddings` with body `{model, input: [...]}`
/// returning `{data: [{index, embedding}, ...]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: JsonClient,
    url: String,
    model: Option<String>,
    batch_size: usize,
    max_in_flight: usize,
}

impl RemoteEmbedder {
    pub fn from_spec(spec: &EmbedderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::new(
            spec.endpoint.as_deref().unwrap_or_default(),
            spec.model_name.clone(),
            spec.batch_size,
            spec.max_in_flight,
            RetryPolicy::default(),
        ))
    }

    pub fn new(
        endpoint: &str,
        model: Option<String>,
        batch_size: usize,
        max_in_flight: usize,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            client: JsonClient::new(retry, Duration::from_secs(120)),
            url: join_url(endpoint, "embeddings"),
            model,
            batch_size: batch_size.max(1),
            max_in_flight: max_in_flight.max(1),
        }
    }

    fn embed_chunk(&self, chunk: &[String]) -> Result<Vec<Embedding>> {
        let mut body = json!({ "input": chunk });
        if let Some(m) = &self.model {
            body["model"] = Value::String(m.clone());
        }
        let resp = self.client.post(&self.url, &body).map_err(|e| match e {
            BackendError::Http { status, body } => Error::Embedding { status, body },
            other => Error::Backend(other),
        })?;
        parse_embedding_response(&resp, chunk.len())
    }
}

fn parse_embedding_response(resp: &Value, expected: usize) -> Result<Vec<Embedding>> {
    let protocol = |m: &str| Error::Backend(BackendError::Protocol(m.to_string()));
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| protocol("embedding response lacks `data` array"))?;
    let mut out: Vec<Option<Embedding>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| protocol("embedding item lacks `embedding` array"))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| protocol("embedding value is not a number")))
            .collect::<Result<Vec<_>>>()?;
        let slot = out
            .get_mut(index)
            .ok_or_else(|| protocol("embedding index out of range"))?;
        *slot = Some(Embedding::new(values));
    }
    out.into_iter()
        .map(|v| v.ok_or_else(|| protocol("embedding response missing an index")))
        .collect()
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let chunks: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let results: Vec<Mutex<Option<Result<Vec<Embedding>>>>> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..self.max_in_flight.min(chunks.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(chunk) = chunks.get(i) else { break };
                    let r = self.embed_chunk(chunk);
                    let failed = r.is_err();
                    *results[i].lock().unwrap() = Some(r);
                    if failed {
                        next.store(chunks.len(), Ordering::SeqCst);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for slot in results {
            if let Some(r) = slot.into_inner().unwrap() {
                out.extend(r?)
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Embedding {
        Embedding::new(xs.to_vec())
    }

    #[test]
    fn mean_pool_examples() {
        assert_eq!(mean_pool(&[v(&[1.0, 1.0]), v(&[3.0, 3.0])]).unwrap(), v(&[2.0, 2.0]));
        assert_eq!(mean_pool(&[v(&[5.0, 0.0])]).unwrap(), v(&[5.0, 0.0]));
        assert_eq!(
            mean_pool(&[v(&[1.0, 2.0]), v(&[2.0, 3.0]), v(&[3.0, 4.0])]).unwrap(),
            v(&[2.0, 3.0])
        );
    }

    #[test]
    fn mean_pool_errors() {
        assert!(matches!(mean_pool(&[]), Err(Error::Empty(_))));
        assert!(matches!(
            mean_pool(&[v(&[1.0]), v(&[1.0, 2.0])]),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn normalize_three_four() {
        let n = v(&[3.0, 4.0]).normalized();
        assert!((n.values[0] - 0.6).abs() < 1e-12 && (n.values[1] - 0.8).abs() < 1e-12);
        assert_eq!(v(&[0.0, 0.0]).normalized(), v(&[0.0, 0.0]));
    }

    #[test]
    fn hash_embedder_is_deterministic() {
        let spec = EmbedderSpec::deterministic(16);
        let out = embed_batch(&["a".into(), "a".into()], &spec).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[0].dim(), 16);
    }

    #[test]
    fn hash_embedder_distinguishes_texts() {
        let spec = EmbedderSpec::deterministic(32);
        let texts: Vec<String> = (0..500).map(|i| format!("review number {i} tok{i}")).collect();
        let mut out = embed_batch(&texts, &spec).unwrap();
        out.extend(embed_batch(&["a".into(), "b".into()], &spec).unwrap());
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                assert_ne!(out[i], out[j], "collision between {i} and {j}");
            }
        }
    }

    #[test]
    fn normalized_batch_has_unit_norm() {
        let mut spec = EmbedderSpec::deterministic(8);
        spec.normalize = true;
        for e in embed_batch(&["good food".into(), "slow service!".into(), "??".into()], &spec).unwrap() {
            assert!((e.norm() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn remote_requires_endpoint() {
        let mut spec = EmbedderSpec::deterministic(4);
        spec.kind = EmbedderKind::Remote;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn parses_out_of_order_response() {
        let resp = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]});
        let out = parse_embedding_response(&resp, 2).unwrap();
        assert_eq!(out, vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])]);
        assert!(parse_embedding_response(&json!({"data": []}), 1).is_err());
    }

    #[test]
    fn dimension_check() {
        let spec = EmbedderSpec::deterministic(4);
        struct Wrong;
        impl Embedder for Wrong {
            fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
                Ok(texts.iter().map(|_| Embedding::new(vec![0.0; 3])).collect())
            }
        }
        assert!(matches!(
            embed_with(&Wrong, &["x".into()], &spec),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }
}
