//! HTTP backend for a local model server exposing an Ollama-style
//! completion endpoint (`POST /api/generate`, non-streaming).
//!
//! Requests are bounded by an in-flight pool (default 4, matching the
//! number of models assumed resident on the server), carry a per-request
//! timeout, and are retried once on transport failure.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::genome::ModelId;

use super::{
    validate_request, Backend, BackendKind, GatewayError, GenerationRequest, GenerationResponse,
    CONTEXT_BUDGET_TOKENS, DEFAULT_MAX_IN_FLIGHT, DEFAULT_REQUEST_TIMEOUT,
};

/// Counting semaphore with an observation gauge for tests.
pub struct BoundedPool {
    limit: usize,
    in_use: Mutex<usize>,
    available: Condvar,
    max_observed: AtomicUsize,
}

impl BoundedPool {
    pub fn new(limit: usize) -> Self {
        BoundedPool {
            limit: limit.max(1),
            in_use: Mutex::new(0),
            available: Condvar::new(),
            max_observed: AtomicUsize::new(0),
        }
    }

    /// Blocks until a slot is free.
    pub fn acquire(&self) -> PoolGuard<'_> {
        let mut in_use = self.in_use.lock().expect("pool lock");
        while *in_use >= self.limit {
            in_use = self.available.wait(in_use).expect("pool lock");
        }
        *in_use += 1;
        self.max_observed.fetch_max(*in_use, Ordering::SeqCst);
        PoolGuard { pool: self }
    }

    /// High-water mark of concurrently held slots.
    pub fn max_observed(&self) -> usize {
        self.max_observed.load(Ordering::SeqCst)
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

pub struct PoolGuard<'a> {
    pool: &'a BoundedPool,
}

impl Drop for PoolGuard<'_> {
    fn drop(&mut self) {
        let mut in_use = self.pool.in_use.lock().expect("pool lock");
        *in_use -= 1;
        self.pool.available.notify_one();
    }
}

/// HTTP backend configuration.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Server base URL, e.g. `http://localhost:11434`.
    pub endpoint: String,
    /// Models the server is expected to resolve; requests for anything
    /// else are configuration errors.
    pub model_pool: Vec<ModelId>,
    pub max_in_flight: usize,
    pub request_timeout: Duration,
    /// Additional attempts after the first failure.
    pub retries: u32,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model_pool: Vec<ModelId>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model_pool,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            retries: 1,
        }
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    system: &'a str,
    prompt: &'a str,
    stream: bool,
    options: CompletionOptions,
}

#[derive(Serialize)]
struct CompletionOptions {
    temperature: f64,
    num_predict: u32,
    num_ctx: u32,
}

#[derive(Deserialize)]
struct CompletionReply {
    response: String,
}

/// Blocking HTTP client over the completion endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    pool: BoundedPool,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        if config.endpoint.is_empty() {
            return Err(GatewayError::Config("empty endpoint URL".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        let pool = BoundedPool::new(config.max_in_flight);
        Ok(HttpBackend { config, client, pool })
    }

    /// High-water mark of concurrently in-flight requests.
    pub fn max_in_flight_observed(&self) -> usize {
        self.pool.max_observed()
    }

    fn completion_url(&self) -> String {
        format!("{}/api/generate", self.config.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, request: &GenerationRequest) -> Result<String, String> {
        let body = CompletionBody {
            model: request.model.as_str(),
            system: &request.system_prompt,
            prompt: &request.user_prompt,
            stream: false,
            options: CompletionOptions {
                temperature: request.temperature,
                num_predict: request.max_output_tokens,
                num_ctx: CONTEXT_BUDGET_TOKENS,
            },
        };
        let response = self
            .client
            .post(self.completion_url())
            .json(&body)
            .send()
            .map_err(|e| format!("transport: {e}"))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(format!("http {status}: {}", text.chars().take(200).collect::<String>()));
        }
        let reply: CompletionReply = response
            .json()
            .map_err(|e| format!("bad completion payload: {e}"))?;
        Ok(reply.response)
    }
}

impl Backend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        validate_request(request)?;
        if !self.config.model_pool.contains(&request.model) {
            return Err(GatewayError::Config(format!(
                "model `{}` is not in the configured pool",
                request.model
            )));
        }

        let _slot = self.pool.acquire();
        let start = Instant::now();
        let mut last_error = String::new();
        for attempt in 0..=self.config.retries {
            match self.attempt(request) {
                Ok(text) => {
                    if text.is_empty() {
                        log::warn!(
                            "model `{}` produced degenerate (empty) output",
                            request.model
                        );
                    }
                    return Ok(GenerationResponse {
                        text,
                        latency: start.elapsed().as_secs_f64(),
                        backend: BackendKind::HttpServer,
                    });
                }
                Err(cause) => {
                    log::warn!(
                        "request to `{}` failed (attempt {}): {cause}",
                        request.model,
                        attempt + 1
                    );
                    last_error = cause;
                }
            }
        }
        Err(GatewayError::Transport {
            model: request.model.to_string(),
            cause: last_error,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::HttpServer
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_pool_never_exceeds_limit() {
        let pool = BoundedPool::new(4);
        std::thread::scope(|scope| {
            for _ in 0..16 {
                scope.spawn(|| {
                    let _guard = pool.acquire();
                    std::thread::sleep(Duration::from_millis(10));
                });
            }
        });
        assert!(pool.max_observed() <= 4, "observed {}", pool.max_observed());
        assert!(pool.max_observed() >= 2, "pool should actually saturate");
    }

    #[test]
    fn unknown_model_is_a_configuration_error() {
        let backend = HttpBackend::new(HttpConfig::new(
            "http://127.0.0.1:1",
            vec![ModelId::from("known")],
        ))
        .unwrap();
        let request = GenerationRequest {
            role: crate::genome::NodeRole::Generator,
            model: ModelId::from("unknown"),
            system_prompt: "s".into(),
            user_prompt: "u".into(),
            temperature: 0.5,
            max_output_tokens: 16,
        };
        assert!(matches!(
            backend.generate(&request),
            Err(GatewayError::Config(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error_after_retry() {
        // Port 1 refuses connections; the retry policy is exercised and the
        // final error carries the cause.
        let mut config = HttpConfig::new("http://127.0.0.1:1", vec![ModelId::from("m")]);
        config.request_timeout = Duration::from_millis(300);
        let backend = HttpBackend::new(config).unwrap();
        let request = GenerationRequest {
            role: crate::genome::NodeRole::Generator,
            model: ModelId::from("m"),
            system_prompt: "s".into(),
            user_prompt: "u".into(),
            temperature: 0.0,
            max_output_tokens: 16,
        };
        match backend.generate(&request) {
            Err(GatewayError::Transport { model, cause }) => {
                assert_eq!(model, "m");
                assert!(!cause.is_empty());
            }
            other => panic!("expected transport error, got {other:?}"),
        }
    }
}
