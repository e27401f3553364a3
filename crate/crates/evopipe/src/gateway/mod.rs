//! Uniform interface for LLM node invocation.
//!
//! Two backends implement [`Backend`]: a local HTTP model server speaking
//! an Ollama-style completion endpoint ([`http::HttpBackend`]) and a fully
//! deterministic scripted mock ([`mock::ScriptedMock`]) used for tests,
//! synthetic search landscapes, and replayable runs. The module also owns
//! the versioned prompt pools and the code extraction applied to raw model
//! output.

pub mod extract;
pub mod http;
pub mod mock;
pub mod prompts;

pub use extract::extract_code;
pub use http::{HttpBackend, HttpConfig};
pub use mock::{FnBackend, ScriptedMock, ScriptRule};
pub use prompts::{PromptPool, PromptTemplate, Slots, TemplateError};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{ModelId, NodeRole};

/// Context window assumed for every model in the pool, in tokens.
pub const CONTEXT_BUDGET_TOKENS: u32 = 4096;
/// Default cap on generated tokens, leaving context room for the prompt.
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;
/// Default per-request timeout for the HTTP backend.
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(120);
/// Default bound on concurrently in-flight HTTP requests.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
/// Environment variable overriding the configured endpoint URL.
pub const GATEWAY_ENDPOINT_ENV: &str = "EVOPIPE_GATEWAY_URL";

/// One completion request. `role` identifies which pipeline node is
/// calling, which scripted backends use for matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub role: NodeRole,
    pub model: ModelId,
    pub system_prompt: String,
    pub user_prompt: String,
    /// Permitted down to 0.0: the deterministic evaluation regime forces
    /// temperature 0 regardless of genome values.
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// Where a response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    HttpServer,
    ScriptedMock,
}

/// A completion. Empty text is legal but logged as degenerate output; the
/// caller decides what to do with it (the runtime keeps the previous code).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    /// Wall-clock seconds spent in the backend.
    pub latency: f64,
    pub backend: BackendKind,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("gateway configuration error: {0}")]
    Config(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("request to model `{model}` failed: {cause}")]
    Transport { model: String, cause: String },
    #[error("no script rule matched {role} request for model `{model}`")]
    NoScriptMatch { role: NodeRole, model: String },
}

/// A completion backend. Implementations must be safe for concurrent
/// callers; the HTTP backend additionally bounds in-flight requests.
pub trait Backend: Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError>;
    fn kind(&self) -> BackendKind;
}

pub(crate) fn validate_request(request: &GenerationRequest) -> Result<(), GatewayError> {
    if !(0.0..=crate::genome::TEMP_MAX).contains(&request.temperature) {
        return Err(GatewayError::InvalidRequest(format!(
            "temperature {} outside [0.0, {}]",
            request.temperature,
            crate::genome::TEMP_MAX
        )));
    }
    if request.user_prompt.is_empty() || request.system_prompt.is_empty() {
        return Err(GatewayError::InvalidRequest("empty prompt".into()));
    }
    Ok(())
}
