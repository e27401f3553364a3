//! Hit a real local model server (Ollama-compatible `/api/generate`) with
//! one generator call and one full pipeline run. Skips gracefully when no
//! server is reachable.
//!
//! ```bash
//! EVOPIPE_GATEWAY_URL=http://localhost:11434 \
//!   cargo run --example live_server -- llama3.2:3b
//! ```

use std::time::Duration;

use evopipe::bench::problem::{BenchmarkKind, Problem};
use evopipe::gateway::{
    Backend, GenerationRequest, HttpBackend, HttpConfig, PromptPool, GATEWAY_ENDPOINT_ENV,
};
use evopipe::genome::{GenomeId, LlmNodeConfig, ModelId, NodeRole, PipelineGenome, StageGene};
use evopipe::runtime::{run_pipeline, RunOptions};
use evopipe::sandbox::SandboxExecutor;

fn main() {
    let endpoint = std::env::var(GATEWAY_ENDPOINT_ENV)
        .unwrap_or_else(|_| "http://localhost:11434".to_string());
    let model = std::env::args().nth(1).unwrap_or_else(|| "llama3.2:3b".to_string());
    let model = ModelId::new(model);

    let mut config = HttpConfig::new(endpoint.clone(), vec![model.clone()]);
    config.request_timeout = Duration::from_secs(120);
    let backend = HttpBackend::new(config).expect("valid http config");

    let prompts = PromptPool::builtin();
    let problem = Problem {
        benchmark: BenchmarkKind::HumanEval,
        problem_id: "live/0".into(),
        statement: "def fizzbuzz(n):\n    \"\"\"Return a list of 1..n where multiples of 3 are 'Fizz', of 5 are 'Buzz', of both are 'FizzBuzz', else the number.\"\"\"\n".into(),
        test_block: "def check(candidate):\n    assert candidate(5) == [1, 2, 'Fizz', 4, 'Buzz']\n    assert candidate(15)[14] == 'FizzBuzz'\n\ncheck(fizzbuzz)\n".into(),
        entry_point: Some("fizzbuzz".into()),
    };

    // Probe the server with a single tiny request first.
    let (system_prompt, user_prompt) = prompts
        .render(NodeRole::Generator, 0, &evopipe::gateway::Slots {
            problem: Some(&problem.statement),
            ..Default::default()
        })
        .unwrap();
    let probe = GenerationRequest {
        role: NodeRole::Generator,
        model: model.clone(),
        system_prompt,
        user_prompt,
        temperature: 0.2,
        max_output_tokens: 256,
    };
    match backend.generate(&probe) {
        Ok(response) => println!(
            "server answered in {:.1}s ({} chars)",
            response.latency,
            response.text.len()
        ),
        Err(e) => {
            eprintln!("no model server reachable at {endpoint}: {e}");
            eprintln!("start one (e.g. `ollama serve` with `{model}` pulled) and retry");
            std::process::exit(2);
        }
    }

    let executor = SandboxExecutor::new();
    if !executor.is_available() {
        eprintln!("python3 not found; set EVOPIPE_PYTHON");
        std::process::exit(2);
    }

    let node = |m: &ModelId| LlmNodeConfig {
        model: m.clone(),
        prompt_index: 0,
        temperature: 0.4,
    };
    let genome = PipelineGenome {
        genome_id: GenomeId::new("live"),
        generator: node(&model),
        stages: vec![StageGene {
            innovation: 1,
            max_iterations: 3,
            analyzer: None,
            refiner: node(&model),
        }],
    };

    let trace = run_pipeline(
        &genome,
        &problem,
        &backend,
        &prompts,
        &executor,
        RunOptions::default(),
    );
    println!(
        "pipeline run: passed={} early_stopped={} iterations={} wall={:.1}s",
        trace.passed,
        trace.early_stopped,
        trace.events.len(),
        trace.wall_time
    );
    println!("final code:\n{}", trace.final_code);
}
