//! Pipeline genome: the heritable description of one code-generation pipeline.
//!
//! A genome is one generator node followed by 1-3 refinement stages. Each
//! stage is an executor -> optional analyzer -> refiner block with an
//! iteration budget and an innovation number stamped at creation. The node
//! budget is capped at 8 total nodes (generator + per-stage executor,
//! refiner, and optional analyzer), so a 3-stage genome can carry at most
//! one analyzer.
//!
//! Genomes are immutable values after construction: variation operators
//! build new ones rather than editing survivors in place, which makes them
//! safe to share across concurrent evaluators.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound for sampling temperatures carried by genomes.
pub const TEMP_MIN: f64 = 0.05;
/// Upper bound for sampling temperatures.
pub const TEMP_MAX: f64 = 1.2;
/// A pipeline has at most this many refinement stages.
pub const MAX_STAGES: usize = 3;
/// Hard cap on total nodes (generator + executors + analyzers + refiners).
pub const MAX_NODES: u32 = 8;
/// Per-stage iteration budget bounds.
pub const MIN_ITERATIONS: u32 = 1;
pub const MAX_ITERATIONS: u32 = 3;

/// The three LLM-backed node roles. Executors are not LLM nodes and carry
/// no configuration beyond the sandbox itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Generator,
    Analyzer,
    Refiner,
}

impl NodeRole {
    /// Number of preset prompts available to this role.
    pub fn prompt_pool_size(self) -> usize {
        match self {
            NodeRole::Generator => 3,
            NodeRole::Analyzer => 2,
            NodeRole::Refiner => 3,
        }
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRole::Generator => write!(f, "generator"),
            NodeRole::Analyzer => write!(f, "analyzer"),
            NodeRole::Refiner => write!(f, "refiner"),
        }
    }
}

/// Opaque model identifier: the tag a model server resolves.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(String);

impl ModelId {
    pub fn new(name: impl Into<String>) -> Self {
        ModelId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModelId {
    fn from(s: &str) -> Self {
        ModelId(s.to_string())
    }
}

/// Unique identifier of a genome within a search run.
///
/// The engine mints these as `g<generation>-<slot>`, which keeps ids
/// deterministic and gives ranking a total order for tiebreaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GenomeId(String);

impl GenomeId {
    pub fn new(id: impl Into<String>) -> Self {
        GenomeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GenomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Configuration of one LLM node: which model, which preset prompt, and
/// the sampling temperature. The role is implied by the node's position in
/// the genome (generator / stage analyzer / stage refiner).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmNodeConfig {
    pub model: ModelId,
    pub prompt_index: usize,
    pub temperature: f64,
}

/// One refinement stage: executor -> optional analyzer -> refiner, repeated
/// up to `max_iterations` times. The innovation number is stamped once at
/// creation and never changes; crossover aligns stages by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGene {
    pub innovation: u64,
    pub max_iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyzer: Option<LlmNodeConfig>,
    pub refiner: LlmNodeConfig,
}

impl StageGene {
    /// Nodes contributed by this stage: executor + refiner + optional analyzer.
    pub fn node_count(&self) -> u32 {
        2 + u32::from(self.analyzer.is_some())
    }
}

/// A full pipeline genome: one generator followed by 1-3 stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineGenome {
    pub genome_id: GenomeId,
    pub generator: LlmNodeConfig,
    pub stages: Vec<StageGene>,
}

/// Addresses one LLM node inside a genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Generator,
    Analyzer(usize),
    Refiner(usize),
}

impl NodeRef {
    pub fn role(self) -> NodeRole {
        match self {
            NodeRef::Generator => NodeRole::Generator,
            NodeRef::Analyzer(_) => NodeRole::Analyzer,
            NodeRef::Refiner(_) => NodeRole::Refiner,
        }
    }
}

impl PipelineGenome {
    /// Total node count: 1 generator + per stage (executor + refiner +
    /// analyzer when present).
    pub fn node_count(&self) -> u32 {
        1 + self.stages.iter().map(StageGene::node_count).sum::<u32>()
    }

    /// Sum of stage iteration budgets; the ranking tiebreaker key.
    pub fn total_iterations(&self) -> u32 {
        self.stages.iter().map(|s| s.max_iterations).sum()
    }

    pub fn analyzer_count(&self) -> u32 {
        self.stages.iter().filter(|s| s.analyzer.is_some()).count() as u32
    }

    /// All LLM nodes in pipeline order: generator, then per stage the
    /// analyzer (when present) and refiner.
    pub fn llm_nodes(&self) -> Vec<NodeRef> {
        let mut nodes = vec![NodeRef::Generator];
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.analyzer.is_some() {
                nodes.push(NodeRef::Analyzer(i));
            }
            nodes.push(NodeRef::Refiner(i));
        }
        nodes
    }

    pub fn node(&self, node: NodeRef) -> &LlmNodeConfig {
        match node {
            NodeRef::Generator => &self.generator,
            NodeRef::Analyzer(i) => self.stages[i].analyzer.as_ref().expect("analyzer present"),
            NodeRef::Refiner(i) => &self.stages[i].refiner,
        }
    }

    pub fn node_mut(&mut self, node: NodeRef) -> &mut LlmNodeConfig {
        match node {
            NodeRef::Generator => &mut self.generator,
            NodeRef::Analyzer(i) => self.stages[i].analyzer.as_mut().expect("analyzer present"),
            NodeRef::Refiner(i) => &mut self.stages[i].refiner,
        }
    }

    /// True when two genomes carry the same configuration, ignoring ids.
    /// Elites are copied under fresh ids; this is the equality that matters
    /// for the "elites are never mutated" invariant.
    pub fn same_configuration(&self, other: &PipelineGenome) -> bool {
        self.generator == other.generator && self.stages == other.stages
    }

    /// Checks every structural invariant. Run after construction, parsing,
    /// and each variation step.
    pub fn validate(&self) -> Result<(), GenomeError> {
        check_node("generator", NodeRole::Generator, &self.generator)?;
        if self.stages.is_empty() || self.stages.len() > MAX_STAGES {
            return Err(GenomeError::Invalid {
                field: "stages".into(),
                reason: format!("expected 1..={} stages, found {}", MAX_STAGES, self.stages.len()),
            });
        }
        if self.node_count() > MAX_NODES {
            return Err(GenomeError::Invalid {
                field: "stages".into(),
                reason: format!("node_count {} exceeds cap {}", self.node_count(), MAX_NODES),
            });
        }
        let mut last_innovation = 0u64;
        for (i, stage) in self.stages.iter().enumerate() {
            let path = format!("stages[{i}]");
            if stage.innovation == 0 {
                return Err(GenomeError::Invalid {
                    field: format!("{path}.innovation"),
                    reason: "innovation numbers start at 1".into(),
                });
            }
            if i > 0 && stage.innovation <= last_innovation {
                return Err(GenomeError::Invalid {
                    field: format!("{path}.innovation"),
                    reason: format!(
                        "innovations must be strictly increasing ({} after {})",
                        stage.innovation, last_innovation
                    ),
                });
            }
            last_innovation = stage.innovation;
            if !(MIN_ITERATIONS..=MAX_ITERATIONS).contains(&stage.max_iterations) {
                return Err(GenomeError::Invalid {
                    field: format!("{path}.max_iterations"),
                    reason: format!(
                        "expected {}..={}, found {}",
                        MIN_ITERATIONS, MAX_ITERATIONS, stage.max_iterations
                    ),
                });
            }
            if let Some(analyzer) = &stage.analyzer {
                check_node(&format!("{path}.analyzer"), NodeRole::Analyzer, analyzer)?;
            }
            check_node(&format!("{path}.refiner"), NodeRole::Refiner, &stage.refiner)?;
        }
        Ok(())
    }

    /// Checks that every model referenced by the genome is in the pool.
    pub fn validate_models(&self, pool: &[ModelId]) -> Result<(), GenomeError> {
        let check = |field: &str, node: &LlmNodeConfig| {
            if pool.contains(&node.model) {
                Ok(())
            } else {
                Err(GenomeError::UnknownModel {
                    field: field.to_string(),
                    model: node.model.to_string(),
                })
            }
        };
        check("generator.model", &self.generator)?;
        for (i, stage) in self.stages.iter().enumerate() {
            if let Some(analyzer) = &stage.analyzer {
                check(&format!("stages[{i}].analyzer.model"), analyzer)?;
            }
            check(&format!("stages[{i}].refiner.model"), &stage.refiner)?;
        }
        Ok(())
    }
}

fn check_node(field: &str, role: NodeRole, node: &LlmNodeConfig) -> Result<(), GenomeError> {
    if node.model.as_str().is_empty() {
        return Err(GenomeError::Invalid {
            field: format!("{field}.model"),
            reason: "model id is empty".into(),
        });
    }
    if node.prompt_index >= role.prompt_pool_size() {
        return Err(GenomeError::Invalid {
            field: format!("{field}.prompt_index"),
            reason: format!(
                "index {} out of range for {} pool of {}",
                node.prompt_index,
                role,
                role.prompt_pool_size()
            ),
        });
    }
    if !(TEMP_MIN..=TEMP_MAX).contains(&node.temperature) {
        return Err(GenomeError::Invalid {
            field: format!("{field}.temperature"),
            reason: format!(
                "temperature {} outside [{}, {}]",
                node.temperature, TEMP_MIN, TEMP_MAX
            ),
        });
    }
    Ok(())
}

/// Issues innovation numbers. Monotone within a search run; never reissues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnovationCounter {
    next: u64,
}

impl InnovationCounter {
    pub fn new() -> Self {
        InnovationCounter { next: 1 }
    }

    /// Resume a counter from checkpointed state.
    pub fn starting_at(next: u64) -> Self {
        InnovationCounter { next: next.max(1) }
    }

    pub fn issue(&mut self) -> u64 {
        let n = self.next;
        self.next += 1;
        n
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

impl Default for InnovationCounter {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-operator mutation probabilities. Defaults are the search defaults;
/// any of them can be overridden from the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationRates {
    pub add_refine_stage: f64,
    pub add_analyzer: f64,
    pub remove_node: f64,
    pub swap_model: f64,
    pub mutate_prompt: f64,
    pub adjust_temperature: f64,
    pub adjust_iterations: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        MutationRates {
            add_refine_stage: 0.04,
            add_analyzer: 0.05,
            remove_node: 0.18,
            swap_model: 0.25,
            mutate_prompt: 0.30,
            adjust_temperature: 0.20,
            adjust_iterations: 0.10,
        }
    }
}

impl MutationRates {
    pub fn as_array(&self) -> [(&'static str, f64); 7] {
        [
            ("add_refine_stage", self.add_refine_stage),
            ("add_analyzer", self.add_analyzer),
            ("remove_node", self.remove_node),
            ("swap_model", self.swap_model),
            ("mutate_prompt", self.mutate_prompt),
            ("adjust_temperature", self.adjust_temperature),
            ("adjust_iterations", self.adjust_iterations),
        ]
    }
}

/// Term weights of the compatibility distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompatWeights {
    pub stage: f64,
    pub analyzer: f64,
    pub model: f64,
    pub prompt: f64,
    pub temp: f64,
    pub iter: f64,
}

impl Default for CompatWeights {
    fn default() -> Self {
        CompatWeights {
            stage: 1.0,
            analyzer: 0.5,
            model: 0.4,
            prompt: 0.2,
            temp: 0.1,
            iter: 0.1,
        }
    }
}

/// How genomes are sampled during search evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalRegime {
    /// Sample at the temperatures evolution selected.
    Stochastic,
    /// Force temperature 0 on every call regardless of genome values.
    Deterministic,
}

/// All tunable knobs of the evolutionary search. Defaults match the
/// reference configuration; a run config file can override any field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub population_size: usize,
    pub elites: usize,
    pub tournament_size: usize,
    pub parsimony_per_node: f64,
    pub mutation_rates: MutationRates,
    pub temperature_jitter_sigma: f64,
    /// Probability that a disjoint stage from the weaker parent is inherited.
    pub weaker_parent_stage_p: f64,
    /// remove_node removes an analyzer (vs the last stage) with this probability.
    pub remove_analyzer_bias: f64,
    /// adjust_iterations decreases (vs increases) with this probability.
    pub iteration_decrease_bias: f64,
    pub subset_size: usize,
    pub column_count: usize,
    /// Target band for the species count, inclusive.
    pub species_target: (usize, usize),
    pub compatibility_weights: CompatWeights,
    /// Initial compatibility threshold; adjusted dynamically during search.
    pub compatibility_threshold: f64,
    pub compatibility_step: f64,
    pub eval_regime: EvalRegime,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            population_size: 20,
            elites: 2,
            tournament_size: 3,
            parsimony_per_node: 0.02,
            mutation_rates: MutationRates::default(),
            temperature_jitter_sigma: 0.08,
            weaker_parent_stage_p: 0.30,
            remove_analyzer_bias: 0.60,
            iteration_decrease_bias: 0.60,
            subset_size: 25,
            column_count: 7,
            species_target: (3, 5),
            compatibility_weights: CompatWeights::default(),
            compatibility_threshold: 1.0,
            compatibility_step: 0.1,
            eval_regime: EvalRegime::Stochastic,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), GenomeError> {
        let mut rates: Vec<(&str, f64)> = self.mutation_rates.as_array().to_vec();
        rates.push(("weaker_parent_stage_p", self.weaker_parent_stage_p));
        rates.push(("remove_analyzer_bias", self.remove_analyzer_bias));
        rates.push(("iteration_decrease_bias", self.iteration_decrease_bias));
        for (name, rate) in rates {
            if !(0.0..=1.0).contains(&rate) {
                return Err(GenomeError::Invalid {
                    field: name.to_string(),
                    reason: format!("rate {rate} outside [0, 1]"),
                });
            }
        }
        if self.population_size == 0 || self.elites >= self.population_size {
            return Err(GenomeError::Invalid {
                field: "population_size".into(),
                reason: "population must be larger than the elite count".into(),
            });
        }
        if self.tournament_size == 0 {
            return Err(GenomeError::Invalid {
                field: "tournament_size".into(),
                reason: "tournament size must be at least 1".into(),
            });
        }
        if self.species_target.0 > self.species_target.1 {
            return Err(GenomeError::Invalid {
                field: "species_target".into(),
                reason: "target band low end exceeds high end".into(),
            });
        }
        Ok(())
    }
}

/// Errors from genome construction, validation, and parsing.
#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("model pool is empty")]
    EmptyModelPool,
    #[error("genome parse error: {0}")]
    Parse(String),
    #[error("invalid genome: {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown model `{model}` in {field}")]
    UnknownModel { field: String, model: String },
}

/// Samples an LLM node configuration uniformly: model from the pool,
/// prompt index from the role's pool, temperature from the valid range.
pub(crate) fn random_node_config(
    pool: &[ModelId],
    role: NodeRole,
    rng: &mut impl Rng,
) -> LlmNodeConfig {
    LlmNodeConfig {
        model: pool[rng.gen_range(0..pool.len())].clone(),
        prompt_index: rng.gen_range(0..role.prompt_pool_size()),
        temperature: rng.gen_range(TEMP_MIN..=TEMP_MAX),
    }
}

/// Builds a minimal random genome: exactly one stage, no analyzer, all
/// configuration drawn uniformly. Search starts from minimal topologies and
/// lets structural mutations grow them.
pub fn new_random_genome(
    pool: &[ModelId],
    rng: &mut impl Rng,
    counter: &mut InnovationCounter,
    genome_id: GenomeId,
) -> Result<PipelineGenome, GenomeError> {
    if pool.is_empty() {
        return Err(GenomeError::EmptyModelPool);
    }
    let genome = PipelineGenome {
        genome_id,
        generator: random_node_config(pool, NodeRole::Generator, rng),
        stages: vec![StageGene {
            innovation: counter.issue(),
            max_iterations: rng.gen_range(MIN_ITERATIONS..=MAX_ITERATIONS),
            analyzer: None,
            refiner: random_node_config(pool, NodeRole::Refiner, rng),
        }],
    };
    debug_assert!(genome.validate().is_ok());
    Ok(genome)
}

/// Serializes a genome to the stable plain-text record format: pretty JSON
/// with keys in declaration order, trailing newline.
pub fn serialize_genome(genome: &PipelineGenome) -> String {
    let mut text = serde_json::to_string_pretty(genome).expect("genome serialization is infallible");
    text.push('\n');
    text
}

/// Parses and validates a genome record. Errors name the offending field.
pub fn parse_genome(text: &str) -> Result<PipelineGenome, GenomeError> {
    let genome: PipelineGenome =
        serde_json::from_str(text).map_err(|e| GenomeError::Parse(e.to_string()))?;
    genome.validate()?;
    Ok(genome)
}
