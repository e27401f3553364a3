//! Variation operators: seven independent mutations and innovation-aligned
//! crossover.
//!
//! Every operator draws its own firing coin, so several can fire on the
//! same offspring. Operators apply in a fixed order — structural first
//! (add_refine_stage, add_analyzer, remove_node), then configuration
//! (swap_model, mutate_prompt, adjust_temperature, adjust_iterations) — so
//! a stage added this step can immediately receive configuration mutations.
//! An operator that fires but cannot apply structurally (full pipeline,
//! node cap, nothing to remove) is recorded as blocked, never an error.
//!
//! Both operations are pure functions of their inputs and the rng state:
//! with a fixed seed they are fully deterministic, which the engine relies
//! on for replayable runs.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::genome::{
    random_node_config, GenomeId, InnovationCounter, ModelId, NodeRole, PipelineGenome,
    SearchParams, StageGene, MAX_NODES, MAX_STAGES, MIN_ITERATIONS, TEMP_MAX, TEMP_MIN,
};

pub const OPERATOR_NAMES: [&str; 7] = [
    "add_refine_stage",
    "add_analyzer",
    "remove_node",
    "swap_model",
    "mutate_prompt",
    "adjust_temperature",
    "adjust_iterations",
];

/// Result of one mutation pass over a genome.
#[derive(Debug, Clone)]
pub struct MutationOutcome {
    pub offspring: PipelineGenome,
    /// Operators whose probability draw succeeded this pass.
    pub fired: BTreeSet<&'static str>,
    /// Subset of `fired` that could not apply structurally.
    pub blocked: BTreeSet<&'static str>,
}

/// Applies the seven mutation operators to a genome. The offspring keeps
/// the input's genome id; callers that need a fresh id assign it afterward.
pub fn apply_mutations(
    genome: &PipelineGenome,
    params: &SearchParams,
    rng: &mut impl Rng,
    counter: &mut InnovationCounter,
    pool: &[ModelId],
) -> MutationOutcome {
    fn fires<R: Rng>(rng: &mut R, rate: f64) -> bool {
        rng.gen_bool(rate.clamp(0.0, 1.0))
    }

    let mut g = genome.clone();
    let mut fired = BTreeSet::new();
    let mut blocked = BTreeSet::new();
    let rates = &params.mutation_rates;

    // add_refine_stage: append a fresh executor+refiner pair with a budget of 1.
    if fires(rng, rates.add_refine_stage) {
        fired.insert("add_refine_stage");
        if g.stages.len() >= MAX_STAGES || g.node_count() + 2 > MAX_NODES {
            blocked.insert("add_refine_stage");
        } else {
            g.stages.push(StageGene {
                innovation: counter.issue(),
                max_iterations: MIN_ITERATIONS,
                analyzer: None,
                refiner: random_node_config(pool, NodeRole::Refiner, rng),
            });
        }
    }

    // add_analyzer: uniformly chosen stage; blocked if it already has one
    // or the analyzer would breach the node cap.
    if fires(rng, rates.add_analyzer) {
        fired.insert("add_analyzer");
        let idx = rng.gen_range(0..g.stages.len());
        if g.stages[idx].analyzer.is_some() || g.node_count() + 1 > MAX_NODES {
            blocked.insert("add_analyzer");
        } else {
            g.stages[idx].analyzer = Some(random_node_config(pool, NodeRole::Analyzer, rng));
        }
    }

    // remove_node: biased toward removing an analyzer, falling back to the
    // last stage (and vice versa). Blocked only on a 1-stage, analyzer-free
    // genome, which has nothing removable.
    if fires(rng, rates.remove_node) {
        fired.insert("remove_node");
        let analyzer_stages: Vec<usize> = g
            .stages
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.analyzer.is_some().then_some(i))
            .collect();
        let prefer_analyzer = rng.gen_bool(params.remove_analyzer_bias);
        let removed = if prefer_analyzer {
            if !analyzer_stages.is_empty() {
                let pick = analyzer_stages[rng.gen_range(0..analyzer_stages.len())];
                g.stages[pick].analyzer = None;
                true
            } else if g.stages.len() >= 2 {
                g.stages.pop();
                true
            } else {
                false
            }
        } else if g.stages.len() >= 2 {
            g.stages.pop();
            true
        } else if !analyzer_stages.is_empty() {
            let pick = analyzer_stages[rng.gen_range(0..analyzer_stages.len())];
            g.stages[pick].analyzer = None;
            true
        } else {
            false
        };
        if !removed {
            blocked.insert("remove_node");
        }
    }

    // swap_model: uniformly chosen LLM node, model resampled from the pool
    // (re-selection of the current model is allowed).
    if fires(rng, rates.swap_model) {
        fired.insert("swap_model");
        let nodes = g.llm_nodes();
        let node = nodes[rng.gen_range(0..nodes.len())];
        g.node_mut(node).model = pool[rng.gen_range(0..pool.len())].clone();
    }

    // mutate_prompt: uniformly chosen LLM node, prompt resampled from its
    // role's pool (re-selection allowed, so the effective change rate is lower).
    if fires(rng, rates.mutate_prompt) {
        fired.insert("mutate_prompt");
        let nodes = g.llm_nodes();
        let node = nodes[rng.gen_range(0..nodes.len())];
        let size = node.role().prompt_pool_size();
        g.node_mut(node).prompt_index = rng.gen_range(0..size);
    }

    // adjust_temperature: Gaussian jitter on one node, clipped to bounds.
    if fires(rng, rates.adjust_temperature) {
        fired.insert("adjust_temperature");
        let nodes = g.llm_nodes();
        let node = nodes[rng.gen_range(0..nodes.len())];
        let jitter = Normal::new(0.0, params.temperature_jitter_sigma)
            .expect("sigma is non-negative")
            .sample(rng);
        let t = &mut g.node_mut(node).temperature;
        *t = (*t + jitter).clamp(TEMP_MIN, TEMP_MAX);
    }

    // adjust_iterations: +-1 on one stage's budget, biased toward decrease.
    if fires(rng, rates.adjust_iterations) {
        fired.insert("adjust_iterations");
        let idx = rng.gen_range(0..g.stages.len());
        let decrease = rng.gen_bool(params.iteration_decrease_bias);
        let iters = &mut g.stages[idx].max_iterations;
        if decrease {
            *iters = iters.saturating_sub(1).max(MIN_ITERATIONS);
        } else {
            *iters = (*iters + 1).min(crate::genome::MAX_ITERATIONS);
        }
    }

    debug_assert!(g.validate().is_ok(), "mutation produced invalid genome");
    MutationOutcome {
        offspring: g,
        fired,
        blocked,
    }
}

/// Innovation-aligned crossover of two parents.
///
/// The generator is taken whole from one parent by coin flip. Stages with a
/// matching innovation number are taken whole from either parent by coin
/// flip; a stage only the fitter parent carries is always inherited, one
/// only the weaker parent carries is inherited with
/// `params.weaker_parent_stage_p`. The assembly is sorted by innovation,
/// truncated to three stages, and repaired against the node cap by dropping
/// analyzers from the last stage backward. Fitness ties assign the fitter
/// role by coin flip.
pub fn crossover(
    a: &PipelineGenome,
    b: &PipelineGenome,
    fitness_a: f64,
    fitness_b: f64,
    params: &SearchParams,
    rng: &mut impl Rng,
    child_id: GenomeId,
) -> PipelineGenome {
    let a_is_fitter = if fitness_a > fitness_b {
        true
    } else if fitness_b > fitness_a {
        false
    } else {
        rng.gen_bool(0.5)
    };

    let generator = if rng.gen_bool(0.5) {
        a.generator.clone()
    } else {
        b.generator.clone()
    };

    let mut innovations: Vec<u64> = a
        .stages
        .iter()
        .chain(b.stages.iter())
        .map(|s| s.innovation)
        .collect();
    innovations.sort_unstable();
    innovations.dedup();

    let find = |g: &PipelineGenome, innov: u64| -> Option<StageGene> {
        g.stages.iter().find(|s| s.innovation == innov).cloned()
    };

    let mut stages = Vec::new();
    for innov in innovations {
        let from_a = find(a, innov);
        let from_b = find(b, innov);
        match (from_a, from_b) {
            (Some(sa), Some(sb)) => {
                stages.push(if rng.gen_bool(0.5) { sa } else { sb });
            }
            (Some(sa), None) => {
                if a_is_fitter {
                    stages.push(sa);
                } else if rng.gen_bool(params.weaker_parent_stage_p) {
                    stages.push(sa);
                }
            }
            (None, Some(sb)) => {
                if !a_is_fitter {
                    stages.push(sb);
                } else if rng.gen_bool(params.weaker_parent_stage_p) {
                    stages.push(sb);
                }
            }
            (None, None) => unreachable!("innovation came from one of the parents"),
        }
    }

    stages.truncate(MAX_STAGES);

    let mut child = PipelineGenome {
        genome_id: child_id,
        generator,
        stages,
    };

    // Node-cap repair: drop analyzers from the tail until the cap holds.
    // Three analyzer-free stages total 7 nodes, so this always terminates.
    while child.node_count() > MAX_NODES {
        let last_with_analyzer = child
            .stages
            .iter()
            .rposition(|s| s.analyzer.is_some())
            .expect("over the cap implies an analyzer is present");
        child.stages[last_with_analyzer].analyzer = None;
    }

    debug_assert!(child.validate().is_ok(), "crossover produced invalid genome");
    child
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{new_random_genome, GenomeId, LlmNodeConfig};
    use crate::rng::derive_rng;

    fn pool() -> Vec<ModelId> {
        vec![
            ModelId::from("gemma3:1b"),
            ModelId::from("qwen2.5:1.5b"),
            ModelId::from("llama3.2:3b"),
        ]
    }

    fn node(model: &str, prompt: usize, temp: f64) -> LlmNodeConfig {
        LlmNodeConfig {
            model: ModelId::from(model),
            prompt_index: prompt,
            temperature: temp,
        }
    }

    fn stage(innovation: u64, iters: u32, analyzer: bool) -> StageGene {
        StageGene {
            innovation,
            max_iterations: iters,
            analyzer: analyzer.then(|| node("gemma3:1b", 0, 0.4)),
            refiner: node("llama3.2:3b", 1, 0.6),
        }
    }

    fn genome(id: &str, stages: Vec<StageGene>) -> PipelineGenome {
        PipelineGenome {
            genome_id: GenomeId::new(id),
            generator: node("qwen2.5:1.5b", 0, 0.7),
            stages,
        }
    }

    #[test]
    fn zero_rates_is_the_identity() {
        let mut params = SearchParams::default();
        params.mutation_rates = crate::genome::MutationRates {
            add_refine_stage: 0.0,
            add_analyzer: 0.0,
            remove_node: 0.0,
            swap_model: 0.0,
            mutate_prompt: 0.0,
            adjust_temperature: 0.0,
            adjust_iterations: 0.0,
        };
        let g = genome("g", vec![stage(1, 2, true)]);
        let mut rng = derive_rng(0, "identity", 0);
        let mut counter = InnovationCounter::starting_at(10);
        let out = apply_mutations(&g, &params, &mut rng, &mut counter, &pool());
        assert_eq!(out.offspring, g);
        assert!(out.fired.is_empty());
        assert!(out.blocked.is_empty());
    }

    #[test]
    fn add_refine_stage_blocked_at_three_stages() {
        let mut params = SearchParams::default();
        params.mutation_rates = crate::genome::MutationRates {
            add_refine_stage: 1.0,
            add_analyzer: 0.0,
            remove_node: 0.0,
            swap_model: 0.0,
            mutate_prompt: 0.0,
            adjust_temperature: 0.0,
            adjust_iterations: 0.0,
        };
        let g = genome("g", vec![stage(1, 1, false), stage(2, 1, false), stage(3, 1, false)]);
        let mut rng = derive_rng(0, "blocked", 0);
        let mut counter = InnovationCounter::starting_at(10);
        let out = apply_mutations(&g, &params, &mut rng, &mut counter, &pool());
        assert!(out.fired.contains("add_refine_stage"));
        assert!(out.blocked.contains("add_refine_stage"));
        assert_eq!(out.offspring.stages.len(), 3);
    }

    #[test]
    fn add_stage_blocked_by_node_cap_before_stage_cap() {
        // Two stages, both with analyzers: 7 nodes. A new stage would hit 9.
        let mut params = SearchParams::default();
        params.mutation_rates.add_refine_stage = 1.0;
        params.mutation_rates.add_analyzer = 0.0;
        params.mutation_rates.remove_node = 0.0;
        params.mutation_rates.swap_model = 0.0;
        params.mutation_rates.mutate_prompt = 0.0;
        params.mutation_rates.adjust_temperature = 0.0;
        params.mutation_rates.adjust_iterations = 0.0;
        let g = genome("g", vec![stage(1, 1, true), stage(2, 1, true)]);
        assert_eq!(g.node_count(), 7);
        let mut rng = derive_rng(0, "cap", 0);
        let mut counter = InnovationCounter::starting_at(10);
        let out = apply_mutations(&g, &params, &mut rng, &mut counter, &pool());
        assert!(out.blocked.contains("add_refine_stage"));
    }

    #[test]
    fn remove_node_blocked_on_minimal_genome() {
        let mut params = SearchParams::default();
        params.mutation_rates = crate::genome::MutationRates {
            add_refine_stage: 0.0,
            add_analyzer: 0.0,
            remove_node: 1.0,
            swap_model: 0.0,
            mutate_prompt: 0.0,
            adjust_temperature: 0.0,
            adjust_iterations: 0.0,
        };
        let g = genome("g", vec![stage(1, 1, false)]);
        let mut rng = derive_rng(0, "remove", 0);
        let mut counter = InnovationCounter::starting_at(10);
        let out = apply_mutations(&g, &params, &mut rng, &mut counter, &pool());
        assert!(out.blocked.contains("remove_node"));
        assert_eq!(out.offspring, g);
    }

    #[test]
    fn remove_node_falls_back_to_analyzer_on_single_stage() {
        let mut params = SearchParams::default();
        params.mutation_rates = crate::genome::MutationRates {
            add_refine_stage: 0.0,
            add_analyzer: 0.0,
            remove_node: 1.0,
            swap_model: 0.0,
            mutate_prompt: 0.0,
            adjust_temperature: 0.0,
            adjust_iterations: 0.0,
        };
        let g = genome("g", vec![stage(1, 1, true)]);
        // Whatever branch the rng draws, the only removable node is the analyzer.
        for seed in 0..10 {
            let mut rng = derive_rng(seed, "fallback", 0);
            let mut counter = InnovationCounter::starting_at(10);
            let out = apply_mutations(&g, &params, &mut rng, &mut counter, &pool());
            assert!(out.blocked.is_empty());
            assert_eq!(out.offspring.stages.len(), 1);
            assert!(out.offspring.stages[0].analyzer.is_none());
        }
    }

    #[test]
    fn operator_firing_frequencies_match_rates() {
        // Monte Carlo oracle: firing is a Bernoulli draw per operator, so the
        // observed frequency over n trials must sit within 3 standard errors.
        let params = SearchParams::default();
        let g = genome("g", vec![stage(1, 2, true), stage(2, 1, false)]);
        let mut rng = derive_rng(1234, "rates", 0);
        let mut counter = InnovationCounter::starting_at(100);
        let trials = 100_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..trials {
            let out = apply_mutations(&g, &params, &mut rng, &mut counter, &pool());
            for name in &out.fired {
                *counts.entry(*name).or_insert(0usize) += 1;
            }
        }
        for (name, rate) in params.mutation_rates.as_array() {
            let observed = *counts.get(name).unwrap_or(&0) as f64 / trials as f64;
            let se = (rate * (1.0 - rate) / trials as f64).sqrt();
            assert!(
                (observed - rate).abs() <= 3.0 * se,
                "{name}: observed {observed:.4}, configured {rate}, 3se {:.4}",
                3.0 * se
            );
        }
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let params = SearchParams::default();
        let g = genome("g", vec![stage(1, 2, true), stage(2, 1, false)]);
        let run = |seed| {
            let mut rng = derive_rng(seed, "det", 0);
            let mut counter = InnovationCounter::starting_at(50);
            apply_mutations(&g, &params, &mut rng, &mut counter, &pool()).offspring
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn crossover_identical_parents_reproduces_parent() {
        let params = SearchParams::default();
        let a = genome("a", vec![stage(1, 2, true), stage(2, 1, false)]);
        let b = genome("b", vec![stage(1, 2, true), stage(2, 1, false)]);
        let mut rng = derive_rng(5, "xover", 0);
        let child = crossover(&a, &b, 3.0, 3.0, &params, &mut rng, GenomeId::new("c"));
        assert!(child.same_configuration(&a));
    }

    #[test]
    fn fitter_parent_disjoint_stage_always_inherited() {
        let params = SearchParams::default();
        let a = genome("a", vec![stage(1, 1, false), stage(7, 2, false)]);
        let b = genome("b", vec![stage(1, 1, false)]);
        for seed in 0..50 {
            let mut rng = derive_rng(seed, "disjoint", 0);
            let child = crossover(&a, &b, 10.0, 1.0, &params, &mut rng, GenomeId::new("c"));
            assert!(
                child.stages.iter().any(|s| s.innovation == 7),
                "fitter parent's stage must always pass down (seed {seed})"
            );
        }
    }

    #[test]
    fn weaker_parent_disjoint_stage_inherited_at_configured_rate() {
        let params = SearchParams::default();
        let a = genome("a", vec![stage(1, 1, false)]);
        let b = genome("b", vec![stage(1, 1, false), stage(7, 2, false)]);
        let mut rng = derive_rng(77, "weaker", 0);
        let trials = 20_000;
        let mut inherited = 0;
        for i in 0..trials {
            let child = crossover(
                &a,
                &b,
                10.0,
                1.0,
                &params,
                &mut rng,
                GenomeId::new(format!("c{i}")),
            );
            if child.stages.iter().any(|s| s.innovation == 7) {
                inherited += 1;
            }
        }
        let freq = inherited as f64 / trials as f64;
        let se = (0.3f64 * 0.7 / trials as f64).sqrt();
        assert!(
            (freq - 0.30).abs() <= 4.0 * se,
            "weaker-parent inheritance frequency {freq}"
        );
    }

    #[test]
    fn four_stage_assembly_truncates_to_first_three_by_innovation() {
        let params = SearchParams::default();
        let a = genome("a", vec![stage(1, 1, false), stage(3, 1, false), stage(5, 1, false)]);
        let b = genome("b", vec![stage(2, 1, false), stage(4, 1, false), stage(6, 1, false)]);
        // Make a the fitter parent and force weaker-stage inheritance on so the
        // assembly can exceed three stages.
        let mut params_all = params.clone();
        params_all.weaker_parent_stage_p = 1.0;
        let mut rng = derive_rng(3, "truncate", 0);
        let child = crossover(&a, &b, 5.0, 1.0, &params_all, &mut rng, GenomeId::new("c"));
        let innovs: Vec<u64> = child.stages.iter().map(|s| s.innovation).collect();
        assert_eq!(innovs, vec![1, 2, 3]);
    }

    #[test]
    fn crossover_never_invents_a_stage() {
        let params = SearchParams::default();
        let mut rng = derive_rng(11, "invent", 0);
        let mut counter = InnovationCounter::new();
        for i in 0..500 {
            let mut a =
                new_random_genome(&pool(), &mut rng, &mut counter, GenomeId::new("a")).unwrap();
            let mut b =
                new_random_genome(&pool(), &mut rng, &mut counter, GenomeId::new("b")).unwrap();
            // Grow the parents a little so disjoint stages exist.
            for _ in 0..4 {
                a = apply_mutations(&a, &params, &mut rng, &mut counter, &pool()).offspring;
                b = apply_mutations(&b, &params, &mut rng, &mut counter, &pool()).offspring;
            }
            let child = crossover(
                &a,
                &b,
                rng.gen_range(0.0..5.0),
                rng.gen_range(0.0..5.0),
                &params,
                &mut rng,
                GenomeId::new(format!("c{i}")),
            );
            child.validate().unwrap();
            for s in &child.stages {
                assert!(
                    a.stages
                        .iter()
                        .chain(b.stages.iter())
                        .any(|k| k.innovation == s.innovation),
                    "stage {} not present in either parent",
                    s.innovation
                );
            }
        }
    }

    #[test]
    fn node_cap_repair_drops_tail_analyzers() {
        let params = SearchParams::default();
        // Both parents carry analyzers; matched assembly can reach 3 stages
        // with 2+ analyzers (node_count > 8), forcing the repair path.
        let a = genome(
            "a",
            vec![stage(1, 1, true), stage(2, 1, true), stage(3, 1, false)],
        );
        let b = genome(
            "b",
            vec![stage(1, 1, true), stage(2, 1, true), stage(3, 1, true)],
        );
        for seed in 0..50 {
            let mut rng = derive_rng(seed, "repair", 0);
            let child = crossover(&a, &b, 2.0, 1.0, &params, &mut rng, GenomeId::new("c"));
            assert!(child.node_count() <= MAX_NODES);
            child.validate().unwrap();
        }
    }
}
