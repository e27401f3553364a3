//! Five-run validation of two configurations on a tiny benchmark with a
//! scripted backend, then every analysis table: means, significance,
//! taxonomy, iteration value, noise, and the hard ceiling.
//!
//! ```bash
//! cargo run --example validate_and_report
//! ```

use evopipe::bench::report::{
    render_ceiling, render_config_means, render_iterations, render_noise, render_significance,
    render_taxonomy, significance_rows,
};
use evopipe::bench::stats::{error_taxonomy, hard_ceiling, iteration_analysis, noise_empirical};
use evopipe::bench::{
    evaluate_config, BenchmarkKind, ConfigUnderTest, EvalMode, Problem, TraceStore,
};
use evopipe::gateway::{PromptPool, ScriptRule, ScriptedMock};
use evopipe::genome::{GenomeId, LlmNodeConfig, ModelId, NodeRole, PipelineGenome, StageGene};
use evopipe::sandbox::SandboxExecutor;
use std::time::Duration;

fn problems() -> Vec<Problem> {
    let make = |id: &str, signature: &str, body_test: &str| Problem {
        benchmark: BenchmarkKind::HumanEval,
        problem_id: id.to_string(),
        statement: format!("def {signature}:\n    \"\"\"...\"\"\"\n"),
        test_block: body_test.to_string(),
        entry_point: Some(signature.split('(').next().unwrap().to_string()),
    };
    vec![
        make("demo/0", "inc(x)", "assert inc(1) == 2\nassert inc(-1) == 0"),
        make("demo/1", "half(x)", "assert half(4) == 2"),
        make("demo/2", "neg(x)", "assert neg(2) == -2"),
    ]
}

fn genome() -> PipelineGenome {
    let node = |m: &str| LlmNodeConfig {
        model: ModelId::from(m),
        prompt_index: 0,
        temperature: 0.4,
    };
    PipelineGenome {
        genome_id: GenomeId::new("demo"),
        generator: node("qwen2.5:1.5b"),
        stages: vec![StageGene {
            innovation: 1,
            max_iterations: 2,
            analyzer: None,
            refiner: node("llama3.2:3b"),
        }],
    }
}

fn backend() -> ScriptedMock {
    ScriptedMock::from_rules(vec![
        // The generator solves inc, writes broken half (a NameError the
        // refiner can fix), and never solves neg.
        ScriptRule {
            role: Some(NodeRole::Generator),
            model: None,
            user_contains: Some("inc(x)".into()),
            repeat: true,
            response: "```\ndef inc(x):\n    return x + 1\n```".into(),
        },
        ScriptRule {
            role: Some(NodeRole::Generator),
            model: None,
            user_contains: Some("half(x)".into()),
            repeat: true,
            response: "```\ndef half(x):\n    return x // two\n```".into(),
        },
        ScriptRule {
            role: Some(NodeRole::Generator),
            model: None,
            user_contains: Some("neg(x)".into()),
            repeat: true,
            response: "```\ndef neg(x):\n    return x\n```".into(),
        },
        ScriptRule {
            role: Some(NodeRole::Refiner),
            model: None,
            user_contains: Some("def half".into()),
            repeat: true,
            response: "```\ndef half(x):\n    return x // 2\n```".into(),
        },
        ScriptRule::for_role(NodeRole::Refiner, "```\ndef unchanged(x):\n    return x\n```"),
    ])
}

fn main() {
    let executor = SandboxExecutor::new().with_timeout(Duration::from_secs(5));
    if !executor.is_available() {
        eprintln!("python3 not found; set EVOPIPE_PYTHON to your interpreter");
        std::process::exit(2);
    }
    let problems = problems();
    let prompts = PromptPool::builtin();
    let dir = tempfile::tempdir().unwrap();
    let store = TraceStore::new(dir.path());

    let mut stored = Vec::new();
    for (label, early_stopping, mode) in [
        ("pipeline", true, EvalMode::Pipeline),
        ("pipeline-noes", false, EvalMode::Pipeline),
        ("solo", true, EvalMode::GeneratorOnly),
    ] {
        let cfg = ConfigUnderTest {
            label: label.into(),
            genome: genome(),
            early_stopping,
            runs: 5,
            mode,
        };
        let result = evaluate_config(&cfg, &problems, &backend(), &prompts, &executor, Some(&store));
        stored.push(result);
    }

    println!("== configuration means ==\n{}", render_config_means(&stored));
    println!("== significance ==\n{}", render_significance(&significance_rows(&stored)));

    let pipeline_traces = store.load_all("pipeline").unwrap();
    println!("== taxonomy (pipeline) ==\n{}", render_taxonomy(&error_taxonomy(&pipeline_traces)));

    let noes = store.load_all("pipeline-noes").unwrap();
    println!(
        "== iteration analysis ==\n{}",
        render_iterations(&iteration_analysis(&noes, &pipeline_traces))
    );

    println!("== noise ==\n{}", render_noise(&noise_empirical(&stored)));

    let matrices: Vec<_> = stored.iter().map(|c| &c.matrix).collect();
    let mut all_traces = pipeline_traces;
    all_traces.extend(store.load_all("solo").unwrap());
    println!("== hard ceiling ==\n{}", render_ceiling(&hard_ceiling(&matrices, &all_traces)));
}
