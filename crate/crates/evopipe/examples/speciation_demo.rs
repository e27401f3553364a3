//! Watch the compatibility-threshold controller pull the species count
//! into its target band on a structurally clustered population.
//!
//! ```bash
//! cargo run --example speciation_demo
//! ```

use evopipe::genome::{
    CompatWeights, GenomeId, LlmNodeConfig, ModelId, PipelineGenome, SearchParams, StageGene,
};
use evopipe::rng::derive_rng;
use evopipe::speciation::{
    adjust_threshold, assign_species, compatibility_distance, resample_representatives, Species,
};

fn node(model: &str, prompt: usize, temp: f64) -> LlmNodeConfig {
    LlmNodeConfig {
        model: ModelId::from(model),
        prompt_index: prompt,
        temperature: temp.clamp(0.05, 1.2),
    }
}

/// Five members in each of four structural clusters. Members of a cluster
/// split over two refiner prompts, so the narrow starting threshold sees
/// eight species and the controller has to widen; temperatures also drift
/// a little every generation.
fn population(generation: u32) -> Vec<PipelineGenome> {
    let drift = 0.05 * f64::from(generation).sin();
    let mut genomes = Vec::new();
    for cluster in 0..4u64 {
        for member in 0..5usize {
            let temp = 0.3 + cluster as f64 * 0.2 + member as f64 * 0.01 + drift;
            let model = ["m1", "m2", "m3", "m1"][cluster as usize];
            let prompt = cluster as usize % 3;
            let mut stages = vec![StageGene {
                innovation: cluster * 3 + 1,
                max_iterations: 1,
                analyzer: None,
                refiner: node(model, member % 2, temp),
            }];
            for extra in 0..cluster.min(2) {
                stages.push(StageGene {
                    innovation: cluster * 3 + 2 + extra,
                    max_iterations: 1,
                    analyzer: None,
                    refiner: node(model, prompt, temp),
                });
            }
            genomes.push(PipelineGenome {
                genome_id: GenomeId::new(format!("c{cluster}-m{member}")),
                generator: node(model, prompt, temp),
                stages,
            });
        }
    }
    genomes
}

fn main() {
    let weights = CompatWeights::default();
    let params = SearchParams::default();

    let sample = population(0);
    println!(
        "distance within cluster 0: {:.3}, between clusters 0 and 3: {:.3}\n",
        compatibility_distance(&sample[0], &sample[1], &weights),
        compatibility_distance(&sample[0], &sample[19], &weights),
    );

    // Start far too narrow: every genome founds its own species.
    let mut threshold = 0.05;
    let mut previous: Vec<Species> = Vec::new();
    let mut next_id = 1;
    println!("{:<12} {:>10} {:>8}   target [3, 5]", "generation", "threshold", "species");
    for generation in 0..15u32 {
        let genomes = population(generation);
        let species = assign_species(&genomes, &previous, threshold, &weights, &mut next_id);
        let in_band = (3..=5).contains(&species.len());
        println!(
            "{generation:<12} {threshold:>10.2} {:>8}   {}",
            species.len(),
            if in_band { "in band" } else { "" }
        );
        threshold = adjust_threshold(threshold, species.len(), params.species_target, params.compatibility_step);
        let mut rng = derive_rng(1, "demo-speciation", u64::from(generation));
        previous = resample_representatives(&species, &genomes, &mut rng);
    }
}
