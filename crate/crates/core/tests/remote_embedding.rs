mod common;

use creens_core::embedding::{embed_batch, EmbedderSpec};
use creens_core::Error;
use serde_json::{json, Value};

use common::StubServer;

fn fake_embedding(text: &str) -> Vec<f64> {
    vec![text.len() as f64, 1.0, 0.0]
}

#[test]
fn batches_preserve_order() {
    let server = StubServer::start(Box::new(|path, body| {
        assert_eq!(path, "/v1/embeddings");
        assert_eq!(body["model"], "mini");
        let inputs = body["input"].as_array().unwrap();
        // Reply in reverse order to exercise index-based placement.
        let data: Vec<Value> = inputs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, t)| json!({"index": i, "embedding": fake_embedding(t.as_str().unwrap())}))
            .collect();
        (200, json!({ "data": data }))
    }));
    let mut spec = EmbedderSpec::remote(server.base_url.clone(), Some("mini".into()), 3);
    spec.batch_size = 4;
    spec.max_in_flight = 3;
    let texts: Vec<String> = (0..11).map(|i| "x".repeat(i + 1)).collect();
    let out = embed_batch(&texts, &spec).unwrap();
    let lens: Vec<f64> = out.iter().map(|e| e.values[0]).collect();
    assert_eq!(lens, (1..=11).map(f64::from).collect::<Vec<_>>());
    let sizes: Vec<usize> = server
        .recorded()
        .iter()
        .map(|r| r.body["input"].as_array().unwrap().len())
        .collect();
    let mut sorted = sizes.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![3, 4, 4]);
}

#[test]
fn http_error_carries_status_and_body() {
    let server = StubServer::start(Box::new(|_, _| (400, json!({"error": "bad model"}))));
    let spec = EmbedderSpec::remote(server.base_url.clone(), None, 3);
    match embed_batch(&["a".into()], &spec) {
        Err(Error::Embedding { status, body }) => {
            assert_eq!(status, 400);
            assert!(body.contains("bad model"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn wrong_dimension_is_rejected() {
    let server = StubServer::start(Box::new(|_, _| {
        (200, json!({"data": [{"index": 0, "embedding": [1.0, 2.0]}]}))
    }));
    let spec = EmbedderSpec::remote(server.base_url.clone(), None, 384);
    assert!(matches!(
        embed_batch(&["a".into()], &spec),
        Err(Error::DimensionMismatch {
            expected: 384,
            actual: 2
        })
    ));
}

#[test]
fn unreachable_endpoint_is_an_error() {
    let spec = EmbedderSpec::remote("http://127.0.0.1:9/v1", None, 3);
    assert!(embed_batch(&["a".into()], &spec).is_err());
}
