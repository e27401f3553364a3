//! Speciation: compatibility distance, species assignment, dynamic
//! threshold control, and fitness sharing.
//!
//! Species protect topological diversity: a genome's fitness is divided by
//! its species size, so one topology cannot crowd out the rest of the
//! population just by replicating itself. The compatibility threshold is
//! adjusted each generation to keep the species count inside a target band.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::genome::{CompatWeights, GenomeId, PipelineGenome};

/// One species: a representative genome and its current member ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Species {
    pub species_id: u64,
    pub representative: PipelineGenome,
    pub members: Vec<GenomeId>,
}

/// Compatibility distance between two genomes.
///
/// `stage_count_diff * w.stage + analyzer_count_diff * w.analyzer +
/// model_mismatches * w.model + prompt_mismatches * w.prompt +
/// sum(temp_diffs) * w.temp + sum(iteration_diffs) * w.iter`
///
/// Per-node terms compare aligned roles only: generator against generator,
/// and stages paired by innovation number (refiner against refiner, analyzer
/// against analyzer when both stages carry one). Unpaired stages — and an
/// analyzer present on only one side of a paired stage — contribute solely
/// through the count terms. Symmetric, non-negative, and zero exactly when
/// every compared field is equal.
pub fn compatibility_distance(
    a: &PipelineGenome,
    b: &PipelineGenome,
    weights: &CompatWeights,
) -> f64 {
    let stage_diff = (a.stages.len() as f64 - b.stages.len() as f64).abs();
    let analyzer_diff = (a.analyzer_count() as f64 - b.analyzer_count() as f64).abs();

    let mut model_mismatches = 0u32;
    let mut prompt_mismatches = 0u32;
    let mut temp_diff = 0.0f64;
    let mut iter_diff = 0.0f64;

    let mut compare_nodes = |x: &crate::genome::LlmNodeConfig, y: &crate::genome::LlmNodeConfig| {
        if x.model != y.model {
            model_mismatches += 1;
        }
        if x.prompt_index != y.prompt_index {
            prompt_mismatches += 1;
        }
        temp_diff += (x.temperature - y.temperature).abs();
    };

    compare_nodes(&a.generator, &b.generator);

    for sa in &a.stages {
        if let Some(sb) = b.stages.iter().find(|s| s.innovation == sa.innovation) {
            compare_nodes(&sa.refiner, &sb.refiner);
            if let (Some(ana_a), Some(ana_b)) = (&sa.analyzer, &sb.analyzer) {
                compare_nodes(ana_a, ana_b);
            }
            iter_diff += (sa.max_iterations as f64 - sb.max_iterations as f64).abs();
        }
    }

    stage_diff * weights.stage
        + analyzer_diff * weights.analyzer
        + f64::from(model_mismatches) * weights.model
        + f64::from(prompt_mismatches) * weights.prompt
        + temp_diff * weights.temp
        + iter_diff * weights.iter
}

/// Partitions a population into species.
///
/// Genomes are visited in genome-id order and join the first species whose
/// representative lies within the threshold; otherwise they found a new
/// species with themselves as representative. Previous species keep their
/// identity (and representative) when they attract members; empty ones are
/// dropped. The fold is deterministic, so identical inputs always produce
/// the identical partition.
pub fn assign_species(
    population: &[PipelineGenome],
    previous: &[Species],
    threshold: f64,
    weights: &CompatWeights,
    next_species_id: &mut u64,
) -> Vec<Species> {
    let mut species: Vec<Species> = previous
        .iter()
        .map(|s| Species {
            species_id: s.species_id,
            representative: s.representative.clone(),
            members: Vec::new(),
        })
        .collect();

    let mut order: Vec<&PipelineGenome> = population.iter().collect();
    order.sort_by(|a, b| a.genome_id.cmp(&b.genome_id));

    for genome in order {
        let slot = species
            .iter()
            .position(|s| compatibility_distance(genome, &s.representative, weights) <= threshold);
        match slot {
            Some(i) => species[i].members.push(genome.genome_id.clone()),
            None => {
                species.push(Species {
                    species_id: *next_species_id,
                    representative: genome.clone(),
                    members: vec![genome.genome_id.clone()],
                });
                *next_species_id += 1;
            }
        }
    }

    species.retain(|s| !s.members.is_empty());
    species
}

/// Resamples each species' representative uniformly from its current
/// members, in preparation for the next generation's assignment.
pub fn resample_representatives(
    species: &[Species],
    population: &[PipelineGenome],
    rng: &mut impl Rng,
) -> Vec<Species> {
    species
        .iter()
        .map(|s| {
            let pick = &s.members[rng.gen_range(0..s.members.len())];
            let representative = population
                .iter()
                .find(|g| &g.genome_id == pick)
                .expect("species member exists in population")
                .clone();
            Species {
                species_id: s.species_id,
                representative,
                members: s.members.clone(),
            }
        })
        .collect()
}

/// Moves the compatibility threshold toward the target species band:
/// too many species widens it, too few narrows it, never below one step.
pub fn adjust_threshold(
    threshold: f64,
    species_count: usize,
    target: (usize, usize),
    step: f64,
) -> f64 {
    if species_count > target.1 {
        threshold + step
    } else if species_count < target.0 {
        (threshold - step).max(step)
    } else {
        threshold
    }
}

/// Fitness sharing: a genome's fitness divided by its species size.
///
/// # Panics
///
/// `species_size` of zero is a logic error — every member belongs to a
/// non-empty species by construction.
pub fn shared_fitness(raw: f64, species_size: usize) -> f64 {
    assert!(species_size >= 1, "species_size must be at least 1");
    raw / species_size as f64
}
