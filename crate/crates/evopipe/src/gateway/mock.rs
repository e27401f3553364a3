//! Scripted deterministic backend.
//!
//! A script is an ordered list of rules; each request takes the first
//! matching live rule. Non-repeating rules are consumed on use, so a rule
//! like "(generator, call 1)" is expressed by listing it once. The cursor
//! state sits behind a mutex, keeping replay exact under concurrent
//! callers as long as request arrival order is itself deterministic — the
//! engine evaluates sequentially in mock mode for exactly that reason.

use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::genome::NodeRole;

use super::{validate_request, Backend, BackendKind, GatewayError, GenerationRequest, GenerationResponse};

/// One script record: match criteria plus the canned response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Match only this node role, when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<NodeRole>,
    /// Match only this model tag, when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Match only requests whose user prompt contains this substring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_contains: Option<String>,
    /// Keep the rule live after a match instead of consuming it.
    #[serde(default)]
    pub repeat: bool,
    pub response: String,
}

impl ScriptRule {
    /// A rule matching every request, never consumed.
    pub fn always(response: impl Into<String>) -> Self {
        ScriptRule {
            role: None,
            model: None,
            user_contains: None,
            repeat: true,
            response: response.into(),
        }
    }

    /// A repeating rule matching one role.
    pub fn for_role(role: NodeRole, response: impl Into<String>) -> Self {
        ScriptRule {
            role: Some(role),
            ..Self::always(response)
        }
    }

    /// A single-use rule matching one role.
    pub fn once(role: NodeRole, response: impl Into<String>) -> Self {
        ScriptRule {
            repeat: false,
            ..Self::for_role(role, response)
        }
    }

    fn matches(&self, request: &GenerationRequest) -> bool {
        if let Some(role) = self.role {
            if role != request.role {
                return false;
            }
        }
        if let Some(model) = &self.model {
            if model != request.model.as_str() {
                return false;
            }
        }
        if let Some(needle) = &self.user_contains {
            if !request.user_prompt.contains(needle.as_str()) {
                return false;
            }
        }
        true
    }
}

struct RuleState {
    rule: ScriptRule,
    used: bool,
}

/// Deterministic scripted backend.
pub struct ScriptedMock {
    rules: Mutex<Vec<RuleState>>,
}

impl ScriptedMock {
    pub fn from_rules(rules: Vec<ScriptRule>) -> Self {
        ScriptedMock {
            rules: Mutex::new(rules.into_iter().map(|rule| RuleState { rule, used: false }).collect()),
        }
    }

    /// Loads a script file: a JSON array of rules.
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("mock script {}: {e}", path.display())))?;
        let rules: Vec<ScriptRule> = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("mock script {}: {e}", path.display())))?;
        Ok(Self::from_rules(rules))
    }

    /// A mock that answers every request with the same text.
    pub fn answering(response: impl Into<String>) -> Self {
        Self::from_rules(vec![ScriptRule::always(response)])
    }
}

impl Backend for ScriptedMock {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        validate_request(request)?;
        let start = Instant::now();
        let mut rules = self.rules.lock().expect("mock script lock");
        for state in rules.iter_mut() {
            if (state.rule.repeat || !state.used) && state.rule.matches(request) {
                state.used = true;
                let text = state.rule.response.clone();
                if text.is_empty() {
                    log::warn!("scripted mock produced degenerate (empty) output");
                }
                return Ok(GenerationResponse {
                    text,
                    latency: start.elapsed().as_secs_f64(),
                    backend: BackendKind::ScriptedMock,
                });
            }
        }
        Err(GatewayError::NoScriptMatch {
            role: request.role,
            model: request.model.to_string(),
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::ScriptedMock
    }
}

/// Closure-backed backend for tests and synthetic fitness landscapes.
pub struct FnBackend<F>(pub F)
where
    F: Fn(&GenerationRequest) -> Result<String, GatewayError> + Sync;

impl<F> Backend for FnBackend<F>
where
    F: Fn(&GenerationRequest) -> Result<String, GatewayError> + Sync,
{
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        validate_request(request)?;
        let start = Instant::now();
        let text = (self.0)(request)?;
        Ok(GenerationResponse {
            text,
            latency: start.elapsed().as_secs_f64(),
            backend: BackendKind::ScriptedMock,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::ScriptedMock
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::ModelId;

    fn request(role: NodeRole, user: &str) -> GenerationRequest {
        GenerationRequest {
            role,
            model: ModelId::from("m1"),
            system_prompt: "system".into(),
            user_prompt: user.into(),
            temperature: 0.5,
            max_output_tokens: 64,
        }
    }

    #[test]
    fn scripted_response_is_exact() {
        let mock = ScriptedMock::from_rules(vec![ScriptRule::once(
            NodeRole::Generator,
            "def f(): return 1",
        )]);
        let response = mock.generate(&request(NodeRole::Generator, "anything")).unwrap();
        assert_eq!(response.text, "def f(): return 1");
        assert_eq!(response.backend, BackendKind::ScriptedMock);
    }

    #[test]
    fn consumed_rules_do_not_match_again() {
        let mock = ScriptedMock::from_rules(vec![
            ScriptRule::once(NodeRole::Generator, "first"),
            ScriptRule::for_role(NodeRole::Generator, "after"),
        ]);
        let r = request(NodeRole::Generator, "x");
        assert_eq!(mock.generate(&r).unwrap().text, "first");
        assert_eq!(mock.generate(&r).unwrap().text, "after");
        assert_eq!(mock.generate(&r).unwrap().text, "after");
    }

    #[test]
    fn unmatched_request_is_an_error() {
        let mock = ScriptedMock::from_rules(vec![ScriptRule::for_role(NodeRole::Refiner, "r")]);
        let err = mock.generate(&request(NodeRole::Generator, "x")).unwrap_err();
        assert!(matches!(err, GatewayError::NoScriptMatch { .. }));
    }

    #[test]
    fn match_criteria_combine() {
        let mock = ScriptedMock::from_rules(vec![
            ScriptRule {
                role: Some(NodeRole::Generator),
                model: Some("m1".into()),
                user_contains: Some("magic".into()),
                repeat: true,
                response: "special".into(),
            },
            ScriptRule::always("fallback"),
        ]);
        assert_eq!(
            mock.generate(&request(NodeRole::Generator, "the magic word")).unwrap().text,
            "special"
        );
        assert_eq!(
            mock.generate(&request(NodeRole::Generator, "nothing")).unwrap().text,
            "fallback"
        );
    }

    #[test]
    fn script_file_round_trip() {
        let rules = vec![ScriptRule::always("hello")];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, serde_json::to_string_pretty(&rules).unwrap()).unwrap();
        let mock = ScriptedMock::from_file(&path).unwrap();
        assert_eq!(mock.generate(&request(NodeRole::Analyzer, "x")).unwrap().text, "hello");
    }

    #[test]
    fn invalid_temperature_is_rejected() {
        let mock = ScriptedMock::answering("x");
        let mut r = request(NodeRole::Generator, "x");
        r.temperature = 1.5;
        assert!(matches!(
            mock.generate(&r),
            Err(GatewayError::InvalidRequest(_))
        ));
    }
}
