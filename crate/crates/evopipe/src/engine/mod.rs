//! The generational search loop.
//!
//! Each generation: pick the rotating problem subset, evaluate every genome
//! on that identical subset, partition into species and share fitness, rank
//! (shared fitness descending, then fewer total iterations, then genome id),
//! record artifacts, and reproduce — two elite copies plus tournament-
//! selected crossover-and-mutation offspring. The champion a run reports is
//! its best genome by search fitness; champion status proper is conferred
//! by the separate full-benchmark validation pass (`validate`).
//!
//! All randomness comes from per-purpose streams derived from the master
//! seed, so mock-mode runs are bit-reproducible and resuming from a
//! checkpoint replays exactly what an unbroken run would have done.

pub mod rundir;
pub mod subset;

pub use rundir::{Checkpoint, RunDir, RunMeta};
pub use subset::{load_difficulty, subset_for_generation};

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::Problem;
use crate::gateway::{Backend, PromptPool};
use crate::genome::{
    new_random_genome, EvalRegime, GenomeError, GenomeId, InnovationCounter, ModelId,
    PipelineGenome, SearchParams,
};
use crate::rng::derive_rng;
use crate::runtime::{run_pipeline, RunOptions};
use crate::sandbox::{CodeExecutor, ErrorType};
use crate::speciation::{
    adjust_threshold, assign_species, resample_representatives, shared_fitness, Species,
};
use crate::variation::{apply_mutations, crossover};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("{path}: {cause}")]
    Io { path: String, cause: String },
    #[error("gateway failed for the whole subset at generation {generation}; checkpoint is resumable")]
    GatewayDown { generation: u32 },
    #[error("cannot resume: {0}")]
    Resume(String),
}

/// A genome with its scores on this generation's subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluatedGenome {
    pub genome: PipelineGenome,
    /// Problems solved on this generation's subset.
    pub raw_passes: u32,
    /// Raw passes minus the parsimony penalty.
    pub fitness: f64,
    /// Fitness divided by species size.
    pub shared: f64,
    /// Sum of stage iteration budgets; the ranking tiebreaker.
    pub total_iterations: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeciesSummary {
    pub species_id: u64,
    pub size: usize,
    pub best_shared: f64,
    pub representative: GenomeId,
}

/// Everything recorded about one generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    /// The subset every genome in this generation was evaluated on.
    pub subset: Vec<String>,
    pub species: Vec<SpeciesSummary>,
    pub best_genome_id: GenomeId,
    pub best_raw: u32,
    pub best_fitness: f64,
    /// Full population snapshot, in rank order.
    pub population: Vec<EvaluatedGenome>,
}

/// Best-so-far genome by search fitness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChampionRecord {
    pub genome: PipelineGenome,
    pub generation: u32,
    pub raw_passes: u32,
    pub fitness: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub champion: ChampionRecord,
    pub records: Vec<GenerationRecord>,
}

/// Inputs to a search run.
pub struct SearchContext<'a> {
    pub params: &'a SearchParams,
    pub model_pool: &'a [ModelId],
    pub problems: &'a [Problem],
    /// Cached per-problem baseline pass rates for stratification.
    pub difficulty: Option<&'a BTreeMap<String, f64>>,
    pub gateway: &'a dyn Backend,
    pub executor: &'a dyn CodeExecutor,
    pub prompts: &'a PromptPool,
    /// Stratified difficulty columns (true) or uniform random subsets.
    pub stratify: bool,
    /// Run directory for artifacts; `None` keeps everything in memory.
    pub out_dir: Option<&'a Path>,
    /// Continue from the run directory's checkpoint instead of starting fresh.
    pub resume: bool,
}

/// Parsimony-penalized fitness.
pub fn fitness(raw_passes: u32, genome: &PipelineGenome, params: &SearchParams) -> f64 {
    f64::from(raw_passes) - params.parsimony_per_node * f64::from(genome.node_count())
}

/// Ranks a generation: shared fitness descending, ties broken by fewer
/// total iterations, remaining ties by genome id.
pub fn rank(mut population: Vec<EvaluatedGenome>) -> Vec<EvaluatedGenome> {
    population.sort_by(|a, b| {
        b.shared
            .total_cmp(&a.shared)
            .then_with(|| a.total_iterations.cmp(&b.total_iterations))
            .then_with(|| a.genome.genome_id.cmp(&b.genome.genome_id))
    });
    population
}

fn tournament_pick(len: usize, size: usize, rng: &mut impl Rng) -> usize {
    (0..size).map(|_| rng.gen_range(0..len)).min().unwrap_or(0)
}

/// Builds the next population: the top `elites` copied verbatim under fresh
/// ids, the rest bred by tournament selection (sample `tournament_size`
/// uniformly with replacement, take the best-ranked), crossover, then
/// mutation.
pub fn reproduce(
    ranked: &[EvaluatedGenome],
    params: &SearchParams,
    rng: &mut impl Rng,
    counter: &mut InnovationCounter,
    pool: &[ModelId],
    next_generation: u32,
) -> Vec<PipelineGenome> {
    debug_assert_eq!(ranked.len(), params.population_size);
    let id = |slot: usize| GenomeId::new(format!("g{next_generation:04}-{slot:02}"));
    let mut next = Vec::with_capacity(params.population_size);

    for slot in 0..params.elites.min(ranked.len()) {
        let mut elite = ranked[slot].genome.clone();
        elite.genome_id = id(slot);
        next.push(elite);
    }

    for slot in next.len()..params.population_size {
        let a = tournament_pick(ranked.len(), params.tournament_size, rng);
        let b = tournament_pick(ranked.len(), params.tournament_size, rng);
        let child = crossover(
            &ranked[a].genome,
            &ranked[b].genome,
            ranked[a].shared,
            ranked[b].shared,
            params,
            rng,
            id(slot),
        );
        next.push(apply_mutations(&child, params, rng, counter, pool).offspring);
    }

    next
}

/// Runs the evolutionary search for `generations` reproduction steps (the
/// initial population is generation 0, so `generations + 1` populations are
/// evaluated; `generations = 0` evaluates only the initial population).
pub fn run_search(
    ctx: &SearchContext<'_>,
    generations: u32,
    seed: u64,
) -> Result<SearchResult, EngineError> {
    ctx.params.validate()?;
    if ctx.model_pool.is_empty() {
        return Err(EngineError::Genome(GenomeError::EmptyModelPool));
    }

    let run_dir = match ctx.out_dir {
        Some(dir) => Some(RunDir::create(dir)?),
        None => None,
    };

    let params = ctx.params;
    let mut counter;
    let mut population: Vec<PipelineGenome>;
    let mut prev_species: Vec<Species>;
    let mut threshold;
    let mut species_id_next;
    let mut champion: Option<ChampionRecord>;
    let start_generation: u32;

    if ctx.resume {
        let Some(run_dir) = &run_dir else {
            return Err(EngineError::Resume("resume requires a run directory".into()));
        };
        if !run_dir.has_checkpoint() {
            return Err(EngineError::Resume(format!(
                "no checkpoint in {}",
                run_dir.path().display()
            )));
        }
        let checkpoint = run_dir.load_checkpoint()?;
        if checkpoint.seed != seed {
            return Err(EngineError::Resume(format!(
                "checkpoint seed {} does not match requested seed {seed}",
                checkpoint.seed
            )));
        }
        if checkpoint.next_generation > generations {
            return Err(EngineError::Resume(format!(
                "run already complete through generation {}",
                checkpoint.next_generation.saturating_sub(1)
            )));
        }
        counter = InnovationCounter::starting_at(checkpoint.innovation_next);
        population = checkpoint.population;
        prev_species = checkpoint.species;
        threshold = checkpoint.threshold;
        species_id_next = checkpoint.species_id_next;
        champion = checkpoint.champion;
        start_generation = checkpoint.next_generation;
    } else {
        counter = InnovationCounter::new();
        let mut init_rng = derive_rng(seed, "init", 0);
        population = (0..params.population_size)
            .map(|slot| {
                new_random_genome(
                    ctx.model_pool,
                    &mut init_rng,
                    &mut counter,
                    GenomeId::new(format!("g0000-{slot:02}")),
                )
            })
            .collect::<Result<_, _>>()?;
        prev_species = Vec::new();
        threshold = params.compatibility_threshold;
        species_id_next = 1;
        champion = None;
        start_generation = 0;

        if let Some(run_dir) = &run_dir {
            run_dir.write_meta(&RunMeta {
                seed,
                generations,
                stratify: ctx.stratify,
                model_pool: ctx.model_pool.to_vec(),
                problem_count: ctx.problems.len(),
                params: params.clone(),
            })?;
        }
    }

    let mut records = Vec::new();

    for generation in start_generation..=generations {
        if let Some(run_dir) = &run_dir {
            run_dir.write_checkpoint(&Checkpoint {
                seed,
                next_generation: generation,
                population: population.clone(),
                species: prev_species.clone(),
                threshold,
                innovation_next: counter.peek(),
                species_id_next,
                champion: champion.clone(),
            })?;
        }

        let subset_ids =
            subset_for_generation(ctx.problems, ctx.difficulty, params, generation, ctx.stratify, seed);
        let subset: Vec<&Problem> = subset_ids
            .iter()
            .filter_map(|id| ctx.problems.iter().find(|p| &p.problem_id == id))
            .collect();

        // Evaluate every genome on the identical subset.
        let mut evaluated = Vec::with_capacity(population.len());
        for genome in &population {
            let (raw_passes, all_gateway_failures) = evaluate_genome(ctx, genome, &subset);
            if all_gateway_failures {
                log::error!(
                    "generation {generation}: genome {} saw only gateway failures; aborting",
                    genome.genome_id
                );
                return Err(EngineError::GatewayDown { generation });
            }
            evaluated.push(EvaluatedGenome {
                raw_passes,
                fitness: fitness(raw_passes, genome, params),
                shared: 0.0,
                total_iterations: genome.total_iterations(),
                genome: genome.clone(),
            });
        }

        // Speciate and share fitness.
        let species = assign_species(
            &population,
            &prev_species,
            threshold,
            &params.compatibility_weights,
            &mut species_id_next,
        );
        let species_size: BTreeMap<&GenomeId, usize> = species
            .iter()
            .flat_map(|s| s.members.iter().map(move |m| (m, s.members.len())))
            .collect();
        for e in &mut evaluated {
            e.shared = shared_fitness(e.fitness, species_size[&e.genome.genome_id]);
        }

        let ranked = rank(evaluated);

        // Champion: best search fitness across the whole run, ties to the
        // earlier generation, then fewer iterations (like the ranking).
        let generation_best = ranked
            .iter()
            .max_by(|a, b| {
                a.fitness
                    .total_cmp(&b.fitness)
                    .then_with(|| b.total_iterations.cmp(&a.total_iterations))
                    .then_with(|| b.genome.genome_id.cmp(&a.genome.genome_id))
            })
            .expect("population is non-empty");
        let improves = champion
            .as_ref()
            .is_none_or(|c| generation_best.fitness > c.fitness);
        if improves {
            champion = Some(ChampionRecord {
                genome: generation_best.genome.clone(),
                generation,
                raw_passes: generation_best.raw_passes,
                fitness: generation_best.fitness,
            });
        }

        let record = GenerationRecord {
            generation,
            subset: subset_ids,
            species: species
                .iter()
                .map(|s| SpeciesSummary {
                    species_id: s.species_id,
                    size: s.members.len(),
                    best_shared: s
                        .members
                        .iter()
                        .map(|m| {
                            ranked
                                .iter()
                                .find(|e| &e.genome.genome_id == m)
                                .expect("member was evaluated")
                                .shared
                        })
                        .fold(f64::MIN, f64::max),
                    representative: s.representative.genome_id.clone(),
                })
                .collect(),
            best_genome_id: ranked[0].genome.genome_id.clone(),
            best_raw: ranked.iter().map(|e| e.raw_passes).max().unwrap_or(0),
            best_fitness: ranked
                .iter()
                .map(|e| e.fitness)
                .fold(f64::MIN, f64::max),
            population: ranked.clone(),
        };
        if let Some(run_dir) = &run_dir {
            run_dir.write_record(&record)?;
        }
        records.push(record);

        threshold = adjust_threshold(threshold, species.len(), params.species_target, params.compatibility_step);
        let mut speciation_rng = derive_rng(seed, "speciation", u64::from(generation));
        prev_species = resample_representatives(&species, &population, &mut speciation_rng);

        // Reproduce unconditionally — after the final generation too — so
        // the closing checkpoint carries the population a longer run would
        // evaluate next, making `--resume` to a higher generation count
        // replay-identical to an unbroken run.
        let mut repro_rng = derive_rng(seed, "reproduce", u64::from(generation));
        population = reproduce(
            &ranked,
            params,
            &mut repro_rng,
            &mut counter,
            ctx.model_pool,
            generation + 1,
        );
    }

    let champion = champion.expect("at least one generation ran");
    if let Some(run_dir) = &run_dir {
        run_dir.write_champion(&champion.genome)?;
        run_dir.write_checkpoint(&Checkpoint {
            seed,
            next_generation: generations + 1,
            population,
            species: prev_species,
            threshold,
            innovation_next: counter.peek(),
            species_id_next,
            champion: Some(champion.clone()),
        })?;
    }

    Ok(SearchResult { champion, records })
}

/// Evaluates one genome over the subset; the second return is true when
/// every problem failed at the gateway before any model call succeeded
/// (the backend is down).
fn evaluate_genome(
    ctx: &SearchContext<'_>,
    genome: &PipelineGenome,
    subset: &[&Problem],
) -> (u32, bool) {
    let options = RunOptions {
        early_stopping: true,
        force_temperature: match ctx.params.eval_regime {
            EvalRegime::Deterministic => Some(0.0),
            EvalRegime::Stochastic => None,
        },
    };
    let mut raw_passes = 0u32;
    let mut gateway_failures = 0usize;
    for problem in subset {
        let trace = run_pipeline(genome, problem, ctx.gateway, ctx.prompts, ctx.executor, options);
        if trace.passed {
            raw_passes += 1;
        }
        match trace.events.first().map(|e| e.outcome.error_type) {
            Some(ErrorType::GatewayError) => gateway_failures += 1,
            Some(ErrorType::HarnessError) => {
                log::warn!(
                    "sandbox failure on {} for {}; counted unsolved",
                    problem.problem_id,
                    genome.genome_id
                );
            }
            _ => {}
        }
    }
    (raw_passes, !subset.is_empty() && gateway_failures == subset.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{LlmNodeConfig, StageGene};

    fn pool() -> Vec<ModelId> {
        vec![ModelId::from("m1"), ModelId::from("m2"), ModelId::from("m3")]
    }

    fn evaluated(id: &str, shared: f64, iters: u32) -> EvaluatedGenome {
        let genome = PipelineGenome {
            genome_id: GenomeId::new(id),
            generator: LlmNodeConfig {
                model: ModelId::from("m1"),
                prompt_index: 0,
                temperature: 0.5,
            },
            stages: vec![StageGene {
                innovation: 1,
                max_iterations: iters.clamp(1, 3),
                analyzer: None,
                refiner: LlmNodeConfig {
                    model: ModelId::from("m2"),
                    prompt_index: 0,
                    temperature: 0.5,
                },
            }],
        };
        EvaluatedGenome {
            raw_passes: 0,
            fitness: shared,
            shared,
            total_iterations: iters,
            genome,
        }
    }

    #[test]
    fn fitness_applies_parsimony_per_node() {
        let params = SearchParams::default();
        let g3 = evaluated("a", 0.0, 1).genome; // 3 nodes
        assert!((fitness(20, &g3, &params) - 19.94).abs() < 1e-9);
        let mut g5 = g3.clone(); // 5 nodes: add a stage
        g5.stages.push(StageGene {
            innovation: 2,
            max_iterations: 1,
            analyzer: None,
            refiner: g5.stages[0].refiner.clone(),
        });
        assert_eq!(g5.node_count(), 5);
        // At equal raw, the 5-node genome scores exactly 0.04 lower.
        let diff = fitness(10, &g3, &params) - fitness(10, &g5, &params);
        assert!((diff - 0.04).abs() < 1e-9);
        // Zero raw leaves only the negative penalty.
        assert!(fitness(0, &g3, &params) < 0.0);
    }

    #[test]
    fn rank_orders_by_shared_then_iterations_then_id() {
        let ranked = rank(vec![
            evaluated("c", 2.0, 3),
            evaluated("a", 2.0, 1),
            evaluated("b", 5.0, 2),
            evaluated("e", 2.0, 1),
            evaluated("d", 1.0, 1),
        ]);
        let ids: Vec<&str> = ranked.iter().map(|e| e.genome.genome_id.as_str()).collect();
        // b first (highest shared); among the 2.0 ties, fewer iterations
        // first (a, e before c), id breaking the a/e tie.
        assert_eq!(ids, vec!["b", "a", "e", "c", "d"]);
    }

    #[test]
    fn tournament_picks_the_best_of_its_sample() {
        // With tournament size 3 over 10 ranked genomes, the selected index
        // is always the minimum of the drawn indices.
        let mut rng = derive_rng(1, "tournament", 0);
        for _ in 0..100 {
            let pick = tournament_pick(10, 3, &mut rng);
            assert!(pick < 10);
        }
        // Size == len concentrates picks near the top: E[min of 10 uniform
        // draws over 0..10] is under 1.
        let mut rng = derive_rng(2, "tournament", 0);
        let picks: Vec<usize> = (0..200).map(|_| tournament_pick(10, 10, &mut rng)).collect();
        assert!(picks.iter().any(|&p| p == 0));
        let mean = picks.iter().sum::<usize>() as f64 / picks.len() as f64;
        assert!(mean < 2.0, "strong pressure toward the top, mean {mean}");
    }

    #[test]
    fn reproduce_keeps_elites_verbatim_and_population_size() {
        let params = SearchParams::default();
        let ranked: Vec<EvaluatedGenome> = (0..20)
            .map(|i| evaluated(&format!("g0000-{i:02}"), 20.0 - i as f64, 1 + (i % 3) as u32))
            .collect();
        let mut rng = derive_rng(3, "repro", 0);
        let mut counter = InnovationCounter::starting_at(100);
        let next = reproduce(&ranked, &params, &mut rng, &mut counter, &pool(), 1);
        assert_eq!(next.len(), 20);
        assert!(next[0].same_configuration(&ranked[0].genome));
        assert!(next[1].same_configuration(&ranked[1].genome));
        assert_eq!(next[0].genome_id.as_str(), "g0001-00");
        for g in &next {
            g.validate().unwrap();
        }
        // Same seed, same next population.
        let mut rng = derive_rng(3, "repro", 0);
        let mut counter = InnovationCounter::starting_at(100);
        let again = reproduce(&ranked, &params, &mut rng, &mut counter, &pool(), 1);
        assert_eq!(next, again);
    }
}
