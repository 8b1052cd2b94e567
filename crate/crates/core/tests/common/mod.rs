#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use creens_core::dataset::{self, Sample};
use creens_core::rng::SplitMix64;
use serde_json::Value;

const TOPICS: [&[&str]; 5] = [
    &["pizza", "pasta", "sauce", "crust", "cheese", "oven"],
    &["waiter", "server", "staff", "table", "manager", "host"],
    &["price", "bill", "expensive", "cheap", "value", "portion"],
    &["music", "decor", "lighting", "patio", "noise", "vibe"],
    &["delivery", "driver", "order", "app", "late", "packaging"],
];

const SENTIMENT: [&[&str]; 5] = [
    &["terrible", "awful", "never", "disgusting"],
    &["poor", "disappointing", "meh", "cold"],
    &["okay", "average", "fine", "decent"],
    &["good", "nice", "tasty", "friendly"],
    &["amazing", "excellent", "perfect", "love"],
];

/// Reviews built from a topic vocabulary and a label-dependent sentiment
/// vocabulary; ids are `r00000`… Labels are uniform over 1..=5.
pub fn synthetic_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|i| {
            let topic = TOPICS[rng.below_usize(TOPICS.len())];
            let label = rng.below_usize(5) as u8 + 1;
            let senti = SENTIMENT[label as usize - 1];
            let len = 6 + rng.below_usize(10);
            let words: Vec<&str> = (0..len)
                .map(|j| {
                    if j % 3 == 0 {
                        senti[rng.below_usize(senti.len())]
                    } else {
                        topic[rng.below_usize(topic.len())]
                    }
                })
                .collect();
            let mut s = Sample::new(format!("r{i:05}"), words.join(" "), label);
            s.user_id = Some(format!("u{}", rng.below_usize(n.max(2) / 2)));
            s.venue_id = Some(format!("v{}", rng.below_usize(50)));
            s
        })
        .collect()
}

pub fn write_synthetic_corpus(path: &Path, n: usize, seed: u64) -> Vec<Sample> {
    let samples = synthetic_samples(n, seed);
    dataset::write_samples(path, &samples).unwrap();
    samples
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub raw_body: String,
    pub body: Value,
}

pub type Handler = dyn Fn(&str, &Value) -> (u16, Value) + Send + Sync;

/// Minimal HTTP server on an ephemeral port that records every request and
/// answers with `handler(path, body)`.
pub struct StubServer {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    server: Arc<tiny_http::Server>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: Box<Handler>) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (srv, log) = (server.clone(), requests.clone());
        let worker = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let mut raw = String::new();
                req.as_reader().read_to_string(&mut raw).unwrap();
                let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
                let path = req.url().to_string();
                let (status, reply) = handler(&path, &body);
                log.lock().unwrap().push(Recorded {
                    path,
                    raw_body: raw,
                    body,
                });
                let resp = tiny_http::Response::from_string(reply.to_string())
                    .with_status_code(status)
                    .with_header("Content-Type: application/json".parse::<tiny_http::Header>().unwrap());
                let _ = req.respond(resp);
            }
        });
        Self {
            base_url: format!("http://127.0.0.1:{port}/v1"),
            requests,
            server,
            worker: Some(worker),
        }
    }

    pub fn recorded(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Extracts the text after the final `User review: ` line of a prompt.
pub fn user_review(prompt: &str) -> &str {
    let start = prompt.rfind("User review: ").map_or(0, |i| i + "User review: ".len());
    let rest = &prompt[start..];
    rest.split('\n').next().unwrap_or(rest)
}
