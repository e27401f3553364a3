//! Benchmark harness: loading problem sets, running multi-run validations,
//! and producing the analysis tables (significance, error taxonomy,
//! iteration value, evaluation noise, hard ceiling).
//!
//! Validation runs are independent full passes over the problem list with
//! fresh sampling each run; counts are aggregated as mean and sample
//! standard deviation (n-1). Every pipeline trace can be persisted to a
//! [`TraceStore`] so the analyses can be re-run offline by the `report`
//! subcommand.

pub mod problem;
pub mod report;
pub mod stats;

pub use problem::{load_benchmark, BenchError, BenchmarkKind, Problem};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gateway::{Backend, PromptPool};
use crate::genome::PipelineGenome;
use crate::runtime::{run_generator_only, run_pipeline, PipelineTrace, RunOptions};
use crate::sandbox::{CodeExecutor, ErrorType};

/// Whether a configuration runs the full pipeline or only its generator
/// (the solo baseline rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Pipeline,
    GeneratorOnly,
}

/// One configuration to validate.
#[derive(Debug, Clone)]
pub struct ConfigUnderTest {
    /// Unique within a report.
    pub label: String,
    pub genome: PipelineGenome,
    pub early_stopping: bool,
    pub runs: u32,
    pub mode: EvalMode,
}

/// Per-problem, per-run solve booleans for one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveMatrix {
    pub problem_ids: Vec<String>,
    /// `runs[r][p]` — run r solved problem p.
    pub runs: Vec<Vec<bool>>,
}

impl SolveMatrix {
    pub fn solve_count(&self, run: usize) -> u32 {
        self.runs[run].iter().filter(|&&b| b).count() as u32
    }

    /// Fraction of runs that solved each problem.
    pub fn per_problem_rate(&self) -> Vec<f64> {
        let runs = self.runs.len().max(1) as f64;
        (0..self.problem_ids.len())
            .map(|p| self.runs.iter().filter(|r| r[p]).count() as f64 / runs)
            .collect()
    }

    pub fn solved_anywhere(&self, problem_index: usize) -> bool {
        self.runs.iter().any(|r| r[problem_index])
    }
}

/// Stored result of validating one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredConfig {
    pub label: String,
    pub benchmark: Option<BenchmarkKind>,
    pub early_stopping: bool,
    pub mode: EvalMode,
    pub per_run_counts: Vec<u32>,
    pub mean: f64,
    pub std: f64,
    /// A run aborted before completing; counts cover finished runs only.
    pub incomplete: bool,
    pub matrix: SolveMatrix,
}

/// The accumulating machine-readable summary of a validation run
/// directory. One record per configuration label.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub configs: Vec<StoredConfig>,
}

impl ValidationSummary {
    pub const FILE_NAME: &'static str = "validation.summary";

    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let path = dir.join(Self::FILE_NAME);
        if !path.exists() {
            return Ok(ValidationSummary::default());
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::other(e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        std::fs::write(dir.join(Self::FILE_NAME), text)
    }

    /// Inserts or replaces the record with the same label.
    pub fn upsert(&mut self, config: StoredConfig) {
        match self.configs.iter_mut().find(|c| c.label == config.label) {
            Some(slot) => *slot = config,
            None => self.configs.push(config),
        }
    }

    pub fn get(&self, label: &str) -> Option<&StoredConfig> {
        self.configs.iter().find(|c| c.label == label)
    }
}

/// Persists pipeline traces under `<root>/traces/<label>/run-<r>/`.
#[derive(Debug, Clone)]
pub struct TraceStore {
    root: PathBuf,
}

impl TraceStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        TraceStore { root: root.into() }
    }

    fn run_dir(&self, label: &str, run: u32) -> PathBuf {
        self.root
            .join("traces")
            .join(sanitize(label))
            .join(format!("run-{run}"))
    }

    pub fn write(&self, label: &str, run: u32, trace: &PipelineTrace) -> std::io::Result<()> {
        let dir = self.run_dir(label, run);
        std::fs::create_dir_all(&dir)?;
        let mut text = serde_json::to_string_pretty(trace).expect("trace serializes");
        text.push('\n');
        std::fs::write(
            dir.join(format!("{}.trace.json", sanitize(&trace.problem_id))),
            text,
        )
    }

    /// Loads every stored trace for a configuration, across all runs.
    pub fn load_all(&self, label: &str) -> std::io::Result<Vec<PipelineTrace>> {
        let mut traces = Vec::new();
        let config_dir = self.root.join("traces").join(sanitize(label));
        if !config_dir.exists() {
            return Ok(traces);
        }
        let mut run_dirs: Vec<PathBuf> = std::fs::read_dir(&config_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        run_dirs.sort();
        for run_dir in run_dirs {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&run_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            for file in files {
                let text = std::fs::read_to_string(&file)?;
                let trace: PipelineTrace = serde_json::from_str(&text)
                    .map_err(|e| std::io::Error::other(format!("{}: {e}", file.display())))?;
                traces.push(trace);
            }
        }
        Ok(traces)
    }

    pub fn labels(&self) -> Vec<String> {
        let dir = self.root.join("traces");
        let Ok(entries) = std::fs::read_dir(dir) else {
            return Vec::new();
        };
        let mut labels: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        labels.sort();
        labels
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Runs `cfg.runs` independent validation passes of one configuration over
/// the problem list. Each pass samples fresh (no state is shared between
/// runs); a run whose traces are all gateway failures marks the evaluation
/// incomplete and stops early, persisting the finished runs.
pub fn evaluate_config(
    cfg: &ConfigUnderTest,
    problems: &[Problem],
    gateway: &dyn Backend,
    prompts: &PromptPool,
    executor: &dyn CodeExecutor,
    store: Option<&TraceStore>,
) -> StoredConfig {
    let mut per_run_counts = Vec::new();
    let mut matrix = SolveMatrix {
        problem_ids: problems.iter().map(|p| p.problem_id.clone()).collect(),
        runs: Vec::new(),
    };
    let mut incomplete = false;

    let options = RunOptions {
        early_stopping: cfg.early_stopping,
        force_temperature: None,
    };

    for run in 0..cfg.runs {
        let mut row = Vec::with_capacity(problems.len());
        let mut gateway_failures = 0usize;
        for problem in problems {
            let trace = match cfg.mode {
                EvalMode::Pipeline => {
                    run_pipeline(&cfg.genome, problem, gateway, prompts, executor, options)
                }
                EvalMode::GeneratorOnly => {
                    run_generator_only(&cfg.genome, problem, gateway, prompts, executor, options)
                }
            };
            if trace
                .events
                .first()
                .is_some_and(|e| e.outcome.error_type == ErrorType::GatewayError)
            {
                gateway_failures += 1;
            }
            row.push(trace.passed);
            if let Some(store) = store {
                if let Err(e) = store.write(&cfg.label, run, &trace) {
                    log::warn!("failed to persist trace: {e}");
                }
            }
        }
        if !problems.is_empty() && gateway_failures == problems.len() {
            log::error!(
                "run {run} of `{}`: every problem failed at the gateway; marking incomplete",
                cfg.label
            );
            incomplete = true;
            break;
        }
        per_run_counts.push(row.iter().filter(|&&b| b).count() as u32);
        matrix.runs.push(row);
    }

    let (mean, std) = stats::mean_std(&per_run_counts);
    StoredConfig {
        label: cfg.label.clone(),
        benchmark: problems.first().map(|p| p.benchmark),
        early_stopping: cfg.early_stopping,
        mode: cfg.mode,
        per_run_counts,
        mean,
        std,
        incomplete,
        matrix,
    }
}
