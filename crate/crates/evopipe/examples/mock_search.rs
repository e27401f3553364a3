//! Full evolutionary search on a synthetic fitness landscape with a known
//! optimum: only a generator using model `qwen2.5:1.5b` with prompt 1
//! produces passing code. Watch the population converge on that pair.
//!
//! ```bash
//! cargo run --release --example mock_search
//! ```

use evopipe::bench::problem::{BenchmarkKind, Problem};
use evopipe::engine::{run_search, SearchContext};
use evopipe::gateway::{FnBackend, GenerationRequest, PromptPool};
use evopipe::genome::{ModelId, NodeRole, SearchParams};
use evopipe::sandbox::{CodeExecutor, ErrorType, ExecutionOutcome};

const MAGIC_MODEL: &str = "qwen2.5:1.5b";
// Generator template 1 is the only one with this phrasing.
const MAGIC_MARKER: &str = "restate the requirements";

struct MarkerExecutor;

impl CodeExecutor for MarkerExecutor {
    fn execute(&self, code: &str, _tests: &str) -> ExecutionOutcome {
        let passed = code.contains("MAGIC");
        ExecutionOutcome {
            passed,
            exit_code: i32::from(!passed),
            stdout: String::new(),
            stderr: if passed { String::new() } else { "AssertionError".into() },
            error_type: if passed { ErrorType::None } else { ErrorType::AssertionError },
            duration: 0.0,
        }
    }
}

fn main() {
    let pool = vec![
        ModelId::from("gemma3:1b"),
        ModelId::from(MAGIC_MODEL),
        ModelId::from("llama3.2:3b"),
    ];
    let problems: Vec<Problem> = (0..25)
        .map(|i| Problem {
            benchmark: BenchmarkKind::HumanEval,
            problem_id: format!("S{i:03}"),
            statement: format!("S{i:03}"),
            test_block: "check(solve)".into(),
            entry_point: None,
        })
        .collect();

    let backend = FnBackend(|request: &GenerationRequest| {
        let magic = request.role == NodeRole::Generator
            && request.model.as_str() == MAGIC_MODEL
            && request.user_prompt.contains(MAGIC_MARKER);
        Ok(format!(
            "```\ndef solve():\n    return \"{}\"\n```",
            if magic { "MAGIC" } else { "WRONG" }
        ))
    });

    let params = SearchParams::default();
    let prompts = PromptPool::builtin();
    let ctx = SearchContext {
        params: &params,
        model_pool: &pool,
        problems: &problems,
        difficulty: None,
        gateway: &backend,
        executor: &MarkerExecutor,
        prompts: &prompts,
        stratify: true,
        out_dir: None,
        resume: false,
    };

    let result = run_search(&ctx, 15, 42).expect("mock search runs");

    println!("{:<12} {:>9} {:>9} {:>10}", "generation", "best raw", "species", "carriers");
    for record in &result.records {
        let carriers = record
            .population
            .iter()
            .filter(|e| {
                e.genome.generator.model.as_str() == MAGIC_MODEL
                    && e.genome.generator.prompt_index == 1
            })
            .count();
        println!(
            "{:<12} {:>9} {:>9} {:>7}/{}",
            record.generation,
            record.best_raw,
            record.species.len(),
            carriers,
            record.population.len(),
        );
    }
    println!(
        "\nchampion {} (generation {}): raw {}, fitness {:.2}",
        result.champion.genome.genome_id,
        result.champion.generation,
        result.champion.raw_passes,
        result.champion.fitness
    );
    println!(
        "champion generator: {} prompt {}",
        result.champion.genome.generator.model, result.champion.genome.generator.prompt_index
    );
}
