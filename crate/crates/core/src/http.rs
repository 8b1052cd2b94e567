//! Blocking JSON-over-HTTP with bounded retries, shared by the embedding and
//! completion clients.

use std::time::Duration;

use serde_json::Value;

use crate::error::BackendError;

/// Environment variable holding the bearer token for remote endpoints.
pub const API_KEY_ENV: &str = "CREENS_API_KEY";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    retry: RetryPolicy,
}

const BODY_EXCERPT: usize = 200;

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

impl JsonClient {
    pub(crate) fn new(retry: RetryPolicy, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            agent,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry,
        }
    }

    pub(crate) fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let mut last = BackendError::Transport("no attempt made".into());
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_backoff * 2u32.pow(attempt - 1));
            }
            match self.post_once(url, body) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    let retryable = match &e {
                        BackendError::Http { status, .. } => *status == 429 || *status >= 500,
                        BackendError::Transport(_) => true,
                        BackendError::Protocol(_) => false,
                    };
                    log::debug!("POST {url} attempt {} failed: {e}", attempt + 1);
                    if !retryable {
                        return Err(e);
                    }
                    last = e;
                }
            }
        }
        Err(last)
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| BackendError::Protocol(format!("invalid JSON body: {e}"))),
            Err(ureq::Error::Status(status, resp)) => Err(BackendError::Http {
                status,
                body: excerpt(&resp.into_string().unwrap_or_default()),
            }),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }
}

/// Joins a base URL (e.g. `http://host:8000/v1`) and a route.
pub(crate) fn join_url(base: &str, route: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), route.trim_start_matches('/'))
}
