//! Run one pipeline on one problem with a scripted model backend and the
//! real sandbox, then walk the captured trace: the generator's broken
//! attempt, the execution failure, and the refiner's repair.
//!
//! ```bash
//! cargo run --example pipeline_trace
//! ```

use evopipe::bench::problem::{BenchmarkKind, Problem};
use evopipe::gateway::{PromptPool, ScriptRule, ScriptedMock};
use evopipe::genome::{GenomeId, LlmNodeConfig, ModelId, NodeRole, PipelineGenome, StageGene};
use evopipe::runtime::{run_pipeline, RunOptions};
use evopipe::sandbox::SandboxExecutor;
use std::time::Duration;

fn main() {
    let problem = Problem {
        benchmark: BenchmarkKind::HumanEval,
        problem_id: "demo/0".into(),
        statement: "def running_max(xs):\n    \"\"\"Return the running maximum of a list.\"\"\"\n"
            .into(),
        test_block: "def check(candidate):\n    assert candidate([1, 3, 2]) == [1, 3, 3]\n    assert candidate([]) == []\n\ncheck(running_max)\n".into(),
        entry_point: Some("running_max".into()),
    };

    // The scripted "generator" forgets to track the maximum; the scripted
    // "refiner" fixes it — standing in for real models.
    let mock = ScriptedMock::from_rules(vec![
        ScriptRule::for_role(
            NodeRole::Generator,
            "```python\ndef running_max(xs):\n    return [max(xs[: i]) for i in range(len(xs))]\n```",
        ),
        ScriptRule::for_role(
            NodeRole::Analyzer,
            "max() is called on an empty slice for i=0; use xs[: i + 1].",
        ),
        ScriptRule::for_role(
            NodeRole::Refiner,
            "```python\ndef running_max(xs):\n    return [max(xs[: i + 1]) for i in range(len(xs))]\n```",
        ),
    ]);

    let node = |model: &str| LlmNodeConfig {
        model: ModelId::from(model),
        prompt_index: 0,
        temperature: 0.3,
    };
    let genome = PipelineGenome {
        genome_id: GenomeId::new("demo"),
        generator: node("qwen2.5:1.5b"),
        stages: vec![StageGene {
            innovation: 1,
            max_iterations: 3,
            analyzer: Some(node("llama3.2:3b")),
            refiner: node("llama3.2:3b"),
        }],
    };

    let executor = SandboxExecutor::new().with_timeout(Duration::from_secs(5));
    if !executor.is_available() {
        eprintln!("python3 not found; set EVOPIPE_PYTHON to your interpreter");
        std::process::exit(2);
    }

    let trace = run_pipeline(
        &genome,
        &problem,
        &mock,
        &PromptPool::builtin(),
        &executor,
        RunOptions::default(),
    );

    println!(
        "problem {} with genome {}: passed={} early_stopped={} initial_passed={}\n",
        trace.problem_id, trace.genome_id, trace.passed, trace.early_stopped, trace.initial_passed
    );
    for event in &trace.events {
        println!(
            "stage {} iteration {}: {:?} (exit {}) nodes={:?}",
            event.stage_index,
            event.iteration_index,
            event.outcome.error_type,
            event.outcome.exit_code,
            event.nodes_invoked,
        );
        if let Some(analysis) = &event.analyzer_text {
            println!("  analyzer: {analysis}");
        }
        if let Some(feedback) = &event.feedback {
            let tail: Vec<&str> = feedback.lines().rev().take(2).collect();
            println!("  feedback tail: {}", tail.into_iter().rev().collect::<Vec<_>>().join(" | "));
        }
    }
    println!("\nfinal code:\n{}", trace.final_code);
}
