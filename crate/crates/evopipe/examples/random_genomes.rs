//! Build random pipeline genomes, inspect node accounting, and round-trip
//! the serialized record format.
//!
//! ```bash
//! cargo run --example random_genomes
//! ```

use evopipe::genome::{
    new_random_genome, parse_genome, serialize_genome, GenomeId, InnovationCounter, ModelId,
};
use evopipe::rng::derive_rng;

fn main() {
    let pool = vec![
        ModelId::from("gemma3:1b"),
        ModelId::from("qwen2.5:1.5b"),
        ModelId::from("llama3.2:3b"),
    ];
    let mut rng = derive_rng(42, "example", 0);
    let mut counter = InnovationCounter::new();

    for i in 0..3 {
        let genome = new_random_genome(
            &pool,
            &mut rng,
            &mut counter,
            GenomeId::new(format!("demo-{i}")),
        )
        .expect("pool is non-empty");

        println!(
            "{}: {} nodes, {} stage(s), total iteration budget {}",
            genome.genome_id,
            genome.node_count(),
            genome.stages.len(),
            genome.total_iterations()
        );

        let record = serialize_genome(&genome);
        let parsed = parse_genome(&record).expect("round trip");
        assert_eq!(parsed, genome);
        if i == 0 {
            println!("--- serialized record ---\n{record}");
        }
    }

    // Out-of-range values are rejected with the offending field named.
    let mut broken = new_random_genome(&pool, &mut rng, &mut counter, GenomeId::new("bad")).unwrap();
    broken.generator.temperature = 3.0;
    let err = parse_genome(&serialize_genome(&broken)).unwrap_err();
    println!("tampered record rejected: {err}");
}
