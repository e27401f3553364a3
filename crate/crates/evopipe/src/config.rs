//! Run configuration file: a single TOML document naming the benchmark
//! files, the gateway (HTTP endpoint or mock script), the model pool, and
//! any search parameter overrides. Unknown keys are rejected and referenced
//! files must exist at load time; relative paths resolve against the config
//! file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::bench::BenchmarkKind;
use crate::gateway::{
    Backend, HttpBackend, HttpConfig, PromptPool, ScriptedMock, DEFAULT_MAX_IN_FLIGHT,
    GATEWAY_ENDPOINT_ENV,
};
use crate::genome::{ModelId, SearchParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {cause}")]
    Io { path: String, cause: String },
    #[error("config parse error in {path}: {cause}")]
    Parse { path: String, cause: String },
    #[error("config: {field} references missing file {path}")]
    MissingFile { field: String, path: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPaths {
    pub humaneval: Option<PathBuf>,
    pub mbpp: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    /// HTTP endpoint of the model server. `EVOPIPE_GATEWAY_URL` overrides.
    pub endpoint: Option<String>,
    /// Scripted mock file; takes precedence over the endpoint when set.
    pub mock_script: Option<PathBuf>,
    pub model_pool: Vec<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub benchmark: BenchmarkPaths,
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub search: SearchParams,
    /// Cached per-problem baseline pass rates (JSON object) for stratification.
    pub difficulty_table: Option<PathBuf>,
    /// Directory of prompt assets overriding the built-in pool.
    pub prompt_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            cause: e.to_string(),
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            cause: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.check_files()?;
        config.search.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if config.gateway.model_pool.is_empty() {
            return Err(ConfigError::Invalid("gateway.model_pool is empty".into()));
        }
        if config.gateway.endpoint.is_none() && config.gateway.mock_script.is_none() {
            return Err(ConfigError::Invalid(
                "gateway needs an endpoint or a mock_script".into(),
            ));
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        if let Some(p) = self.benchmark.humaneval.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.benchmark.mbpp.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.gateway.mock_script.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.difficulty_table.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.prompt_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.output_dir.as_mut() {
            resolve(p);
        }
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        let check = |field: &str, path: &Option<PathBuf>| match path {
            Some(p) if !p.exists() => Err(ConfigError::MissingFile {
                field: field.to_string(),
                path: p.display().to_string(),
            }),
            _ => Ok(()),
        };
        check("benchmark.humaneval", &self.benchmark.humaneval)?;
        check("benchmark.mbpp", &self.benchmark.mbpp)?;
        check("gateway.mock_script", &self.gateway.mock_script)?;
        check("difficulty_table", &self.difficulty_table)?;
        check("prompt_dir", &self.prompt_dir)?;
        Ok(())
    }

    pub fn model_pool(&self) -> Vec<ModelId> {
        self.gateway
            .model_pool
            .iter()
            .map(|m| ModelId::new(m.clone()))
            .collect()
    }

    pub fn benchmark_path(&self, kind: BenchmarkKind) -> Option<&Path> {
        match kind {
            BenchmarkKind::HumanEval => self.benchmark.humaneval.as_deref(),
            BenchmarkKind::MbppSanitized => self.benchmark.mbpp.as_deref(),
        }
    }

    /// Builds the configured backend. The mock script wins when present;
    /// otherwise the HTTP endpoint (with the environment override) is used.
    pub fn build_backend(&self) -> Result<Box<dyn Backend>, ConfigError> {
        if let Some(script) = &self.gateway.mock_script {
            let mock = ScriptedMock::from_file(script)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            return Ok(Box::new(mock));
        }
        let endpoint = std::env::var(GATEWAY_ENDPOINT_ENV)
            .ok()
            .or_else(|| self.gateway.endpoint.clone())
            .ok_or_else(|| ConfigError::Invalid("no gateway endpoint configured".into()))?;
        let mut http = HttpConfig::new(endpoint, self.model_pool());
        http.max_in_flight = self.gateway.max_in_flight;
        http.request_timeout = Duration::from_secs(self.gateway.request_timeout_secs);
        let backend =
            HttpBackend::new(http).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Box::new(backend))
    }

    pub fn prompt_pool(&self) -> Result<PromptPool, ConfigError> {
        match &self.prompt_dir {
            Some(dir) => PromptPool::load_dir(dir).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(PromptPool::builtin()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn minimal_mock_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("script.json"), "[]").unwrap();
        let path = write_config(
            dir.path(),
            r#"
seed = 7

[gateway]
mock_script = "script.json"
model_pool = ["m1", "m2"]
"#,
        );
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.seed, Some(7));
        assert_eq!(config.model_pool().len(), 2);
        assert_eq!(config.search.population_size, 20);
        config.build_backend().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            r#"
surprise = true

[gateway]
model_pool = ["m"]
endpoint = "http://localhost:11434"
"#,
        );
        let err = RunConfig::load(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn missing_referenced_file_is_an_error_naming_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            r#"
[benchmark]
humaneval = "nope.jsonl"

[gateway]
model_pool = ["m"]
endpoint = "http://localhost:11434"
"#,
        );
        let err = RunConfig::load(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("benchmark.humaneval"), "got: {msg}");
        assert!(msg.contains("nope.jsonl"));
    }

    #[test]
    fn search_overrides_apply_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("script.json"), "[]").unwrap();
        let path = write_config(
            dir.path(),
            r#"
[gateway]
mock_script = "script.json"
model_pool = ["m"]

[search]
population_size = 8
eval_regime = "deterministic"

[search.mutation_rates]
swap_model = 0.5
"#,
        );
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.search.population_size, 8);
        assert_eq!(config.search.mutation_rates.swap_model, 0.5);
        // Unlisted fields keep their defaults.
        assert_eq!(config.search.mutation_rates.mutate_prompt, 0.30);
        assert_eq!(config.search.elites, 2);
    }

    #[test]
    fn invalid_rate_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("script.json"), "[]").unwrap();
        let path = write_config(
            dir.path(),
            r#"
[gateway]
mock_script = "script.json"
model_pool = ["m"]

[search.mutation_rates]
swap_model = 1.5
"#,
        );
        assert!(RunConfig::load(&path).is_err());
    }
}
