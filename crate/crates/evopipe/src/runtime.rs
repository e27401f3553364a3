//! Executes one genome on one problem.
//!
//! The generator is called once, then each stage runs up to its iteration
//! budget: execute the current code, stop immediately on a pass when early
//! stopping is on, otherwise build feedback from the failure, call the
//! optional analyzer, call the refiner, and adopt its output as the current
//! code. After the last stage's budget a final verification execution sets
//! the pass flag. With early stopping off, refinement keeps going through
//! the full budgets even after a pass — the mode that exposes how often a
//! refiner breaks already-correct code — and the final code's outcome
//! decides `passed`.
//!
//! Every iteration is recorded in a [`PipelineTrace`], the input to all
//! harness analyses. A gateway failure during an iteration records the
//! iteration as failed with `GatewayError` and the pipeline continues with
//! the previous code; the refiner's output always replaces the current code
//! even if it is worse (there is no rollback), except that an empty
//! response keeps the prior code and flags the event as degenerate.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bench::problem::Problem;
use crate::gateway::{
    extract_code, Backend, GatewayError, GenerationRequest, PromptPool, Slots,
    DEFAULT_MAX_OUTPUT_TOKENS,
};
use crate::genome::{GenomeId, LlmNodeConfig, NodeRole, PipelineGenome};
use crate::sandbox::{CodeExecutor, ErrorType, ExecutionOutcome};

/// Feedback text is bounded so prompt + code + traceback fit the model
/// context (4096 tokens at roughly 4 characters per token, minus room for
/// the template and the reply).
pub const FEEDBACK_CHAR_BUDGET: usize = 12_000;
/// The traceback section keeps at most this many trailing lines.
pub const TRACEBACK_TAIL_LINES: usize = 30;
/// Budget for the traceback slot handed to analyzer/refiner templates.
const TRACEBACK_SLOT_BUDGET: usize = 6_000;

/// One execute(-and-refine) step of a pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationEvent {
    pub stage_index: usize,
    /// Iteration within the stage; the final verification execution is
    /// recorded one past the last stage's budget.
    pub iteration_index: u32,
    pub code_before: String,
    pub outcome: ExecutionOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyzer_text: Option<String>,
    /// The refinement feedback built for this iteration, when one was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    /// Present when a refinement was attempted this iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_after: Option<String>,
    /// The refiner returned empty output and the prior code was kept.
    #[serde(default)]
    pub degenerate_output: bool,
    pub nodes_invoked: Vec<String>,
}

/// Full record of one genome solving (or failing) one problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub problem_id: String,
    pub genome_id: GenomeId,
    pub events: Vec<IterationEvent>,
    pub final_code: String,
    pub passed: bool,
    pub early_stopped: bool,
    /// Outcome of the very first execution (iteration 0).
    pub initial_passed: bool,
    pub wall_time: f64,
}

/// Knobs for one pipeline run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub early_stopping: bool,
    /// Overrides every node's temperature (the deterministic regime forces 0).
    pub force_temperature: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            early_stopping: true,
            force_temperature: None,
        }
    }
}

/// Runs the full pipeline described by `genome` on one problem.
pub fn run_pipeline(
    genome: &PipelineGenome,
    problem: &Problem,
    gateway: &dyn Backend,
    prompts: &PromptPool,
    executor: &dyn CodeExecutor,
    options: RunOptions,
) -> PipelineTrace {
    let started = Instant::now();
    let mut events: Vec<IterationEvent> = Vec::new();

    let generator_label = format!("generator({})", genome.generator.model);
    let mut current = match call_model(
        gateway,
        prompts,
        NodeRole::Generator,
        &genome.generator,
        &Slots {
            problem: Some(&problem.statement),
            ..Default::default()
        },
        options,
    ) {
        Ok(text) => match extract_code(&text) {
            Some(code) => problem.assemble_candidate(&code),
            None => {
                log::warn!(
                    "genome {} produced degenerate generator output on {}",
                    genome.genome_id,
                    problem.problem_id
                );
                String::new()
            }
        },
        Err(error) => {
            events.push(IterationEvent {
                stage_index: 0,
                iteration_index: 0,
                code_before: String::new(),
                outcome: gateway_outcome(&error, None),
                analyzer_text: None,
                feedback: None,
                code_after: None,
                degenerate_output: false,
                nodes_invoked: vec![generator_label],
            });
            return PipelineTrace {
                problem_id: problem.problem_id.clone(),
                genome_id: genome.genome_id.clone(),
                events,
                final_code: String::new(),
                passed: false,
                early_stopped: false,
                initial_passed: false,
                wall_time: started.elapsed().as_secs_f64(),
            };
        }
    };

    let mut initial_passed: Option<bool> = None;
    let last_stage = genome.stages.len() - 1;

    for (stage_index, stage) in genome.stages.iter().enumerate() {
        for iteration_index in 0..stage.max_iterations {
            let outcome = executor.execute(&current, &problem.test_block);
            initial_passed.get_or_insert(outcome.passed);
            let mut nodes_invoked = Vec::new();
            if stage_index == 0 && iteration_index == 0 {
                nodes_invoked.push(generator_label.clone());
            }
            nodes_invoked.push("executor".to_string());

            if outcome.passed && options.early_stopping {
                events.push(IterationEvent {
                    stage_index,
                    iteration_index,
                    code_before: current.clone(),
                    outcome,
                    analyzer_text: None,
                    feedback: None,
                    code_after: None,
                    degenerate_output: false,
                    nodes_invoked,
                });
                return PipelineTrace {
                    problem_id: problem.problem_id.clone(),
                    genome_id: genome.genome_id.clone(),
                    events,
                    final_code: current.clone(),
                    passed: true,
                    early_stopped: true,
                    initial_passed: initial_passed.unwrap_or(true),
                    wall_time: started.elapsed().as_secs_f64(),
                };
            }

            // Refinement. With early stopping off this runs even on a pass;
            // the feedback then notes that the tests currently pass.
            let code_before = current.clone();
            let feedback = format_feedback(&problem.statement, &current, &outcome);
            let traceback = traceback_slot(&outcome);
            let mut analyzer_text: Option<String> = None;

            if let Some(analyzer) = &stage.analyzer {
                match call_model(
                    gateway,
                    prompts,
                    NodeRole::Analyzer,
                    analyzer,
                    &Slots {
                        code: Some(&current),
                        traceback: Some(&traceback),
                        ..Default::default()
                    },
                    options,
                ) {
                    Ok(text) => {
                        nodes_invoked.push(format!("analyzer({})", analyzer.model));
                        if !text.trim().is_empty() {
                            analyzer_text = Some(text);
                        }
                    }
                    Err(error) => {
                        events.push(IterationEvent {
                            stage_index,
                            iteration_index,
                            code_before,
                            outcome: gateway_outcome(&error, Some(&outcome)),
                            analyzer_text: None,
                            feedback: Some(feedback),
                            code_after: None,
                            degenerate_output: false,
                            nodes_invoked,
                        });
                        continue;
                    }
                }
            }

            match call_model(
                gateway,
                prompts,
                NodeRole::Refiner,
                &stage.refiner,
                &Slots {
                    problem: Some(&problem.statement),
                    code: Some(&current),
                    traceback: Some(&traceback),
                    analysis: analyzer_text.as_deref(),
                },
                options,
            ) {
                Ok(text) => {
                    nodes_invoked.push(format!("refiner({})", stage.refiner.model));
                    let mut degenerate_output = false;
                    match extract_code(&text) {
                        Some(code) => current = problem.assemble_candidate(&code),
                        None => {
                            degenerate_output = true;
                            log::warn!(
                                "genome {} refiner produced degenerate output on {}",
                                genome.genome_id,
                                problem.problem_id
                            );
                        }
                    }
                    events.push(IterationEvent {
                        stage_index,
                        iteration_index,
                        code_before,
                        outcome,
                        analyzer_text,
                        feedback: Some(feedback),
                        code_after: Some(current.clone()),
                        degenerate_output,
                        nodes_invoked,
                    });
                }
                Err(error) => {
                    events.push(IterationEvent {
                        stage_index,
                        iteration_index,
                        code_before,
                        outcome: gateway_outcome(&error, Some(&outcome)),
                        analyzer_text,
                        feedback: Some(feedback),
                        code_after: None,
                        degenerate_output: false,
                        nodes_invoked,
                    });
                }
            }
        }
    }

    // Final verification execution decides the pass flag.
    let outcome = executor.execute(&current, &problem.test_block);
    initial_passed.get_or_insert(outcome.passed);
    let passed = outcome.passed;
    events.push(IterationEvent {
        stage_index: last_stage,
        iteration_index: genome.stages[last_stage].max_iterations,
        code_before: current.clone(),
        outcome,
        analyzer_text: None,
        feedback: None,
        code_after: None,
        degenerate_output: false,
        nodes_invoked: vec!["executor".to_string()],
    });

    PipelineTrace {
        problem_id: problem.problem_id.clone(),
        genome_id: genome.genome_id.clone(),
        events,
        final_code: current,
        passed,
        early_stopped: false,
        initial_passed: initial_passed.unwrap_or(false),
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Runs only the generator and one execution: the solo (no-pipeline)
/// configuration used for baseline rows.
pub fn run_generator_only(
    genome: &PipelineGenome,
    problem: &Problem,
    gateway: &dyn Backend,
    prompts: &PromptPool,
    executor: &dyn CodeExecutor,
    options: RunOptions,
) -> PipelineTrace {
    let started = Instant::now();
    let generator_label = format!("generator({})", genome.generator.model);
    match call_model(
        gateway,
        prompts,
        NodeRole::Generator,
        &genome.generator,
        &Slots {
            problem: Some(&problem.statement),
            ..Default::default()
        },
        options,
    ) {
        Ok(text) => {
            let current = match extract_code(&text) {
                Some(code) => problem.assemble_candidate(&code),
                None => String::new(),
            };
            let outcome = executor.execute(&current, &problem.test_block);
            let passed = outcome.passed;
            PipelineTrace {
                problem_id: problem.problem_id.clone(),
                genome_id: genome.genome_id.clone(),
                events: vec![IterationEvent {
                    stage_index: 0,
                    iteration_index: 0,
                    code_before: current.clone(),
                    outcome,
                    analyzer_text: None,
                    feedback: None,
                    code_after: None,
                    degenerate_output: false,
                    nodes_invoked: vec![generator_label, "executor".to_string()],
                }],
                final_code: current,
                passed,
                early_stopped: false,
                initial_passed: passed,
                wall_time: started.elapsed().as_secs_f64(),
            }
        }
        Err(error) => PipelineTrace {
            problem_id: problem.problem_id.clone(),
            genome_id: genome.genome_id.clone(),
            events: vec![IterationEvent {
                stage_index: 0,
                iteration_index: 0,
                code_before: String::new(),
                outcome: gateway_outcome(&error, None),
                analyzer_text: None,
                feedback: None,
                code_after: None,
                degenerate_output: false,
                nodes_invoked: vec![generator_label],
            }],
            final_code: String::new(),
            passed: false,
            early_stopped: false,
            initial_passed: false,
            wall_time: started.elapsed().as_secs_f64(),
        },
    }
}

fn call_model(
    gateway: &dyn Backend,
    prompts: &PromptPool,
    role: NodeRole,
    node: &LlmNodeConfig,
    slots: &Slots<'_>,
    options: RunOptions,
) -> Result<String, GatewayError> {
    let (system_prompt, user_prompt) = prompts
        .render(role, node.prompt_index, slots)
        .map_err(|e| GatewayError::Config(e.to_string()))?;
    let request = GenerationRequest {
        role,
        model: node.model.clone(),
        system_prompt,
        user_prompt,
        temperature: options.force_temperature.unwrap_or(node.temperature),
        max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
    };
    gateway.generate(&request).map(|response| response.text)
}

/// Synthetic outcome recorded when a gateway call fails mid-iteration. The
/// real execution's output, when one happened, is preserved in stderr after
/// the gateway cause.
fn gateway_outcome(error: &GatewayError, execution: Option<&ExecutionOutcome>) -> ExecutionOutcome {
    let stderr = match execution {
        Some(outcome) => format!(
            "gateway error: {error}\n--- execution stderr ---\n{}",
            outcome.stderr
        ),
        None => format!("gateway error: {error}"),
    };
    ExecutionOutcome {
        passed: false,
        exit_code: execution.map_or(-1, |o| o.exit_code),
        stdout: execution.map(|o| o.stdout.clone()).unwrap_or_default(),
        stderr,
        error_type: ErrorType::GatewayError,
        duration: execution.map_or(0.0, |o| o.duration),
    }
}

/// Builds the refinement feedback for a failed (or, with early stopping
/// off, passing) execution: problem statement, the full current code, the
/// classified error type, and the last [`TRACEBACK_TAIL_LINES`] lines of
/// the traceback. Deterministic, and bounded to [`FEEDBACK_CHAR_BUDGET`]
/// characters by eliding text from the middle of the traceback first and
/// the code second, always preserving heads and tails.
pub fn format_feedback(problem_statement: &str, code: &str, outcome: &ExecutionOutcome) -> String {
    let traceback = if outcome.passed {
        "All tests passed. Review the code for robustness and edge cases.".to_string()
    } else {
        traceback_tail(&outcome.stderr)
    };

    let assemble = |code: &str, traceback: &str| {
        format!(
            "Problem:\n{problem_statement}\n\nFailing code:\n{code}\n\nError type: {}\nTraceback (tail):\n{traceback}\n",
            outcome.error_type
        )
    };

    let mut feedback = assemble(code, &traceback);
    if feedback.chars().count() > FEEDBACK_CHAR_BUDGET {
        let fixed = feedback.chars().count() - traceback.chars().count();
        let budget = FEEDBACK_CHAR_BUDGET.saturating_sub(fixed).max(400);
        let traceback = middle_elide(&traceback, budget);
        feedback = assemble(code, &traceback);
        if feedback.chars().count() > FEEDBACK_CHAR_BUDGET {
            let fixed = feedback.chars().count() - code.chars().count();
            let budget = FEEDBACK_CHAR_BUDGET.saturating_sub(fixed).max(400);
            feedback = assemble(&middle_elide(code, budget), &traceback);
        }
        if feedback.chars().count() > FEEDBACK_CHAR_BUDGET {
            feedback = middle_elide(&feedback, FEEDBACK_CHAR_BUDGET);
        }
    }
    feedback
}

/// The traceback text handed to analyzer/refiner prompt slots.
fn traceback_slot(outcome: &ExecutionOutcome) -> String {
    if outcome.passed {
        "All tests passed. Review the code for robustness and edge cases.".to_string()
    } else {
        middle_elide(&traceback_tail(&outcome.stderr), TRACEBACK_SLOT_BUDGET)
    }
}

fn traceback_tail(stderr: &str) -> String {
    let lines: Vec<&str> = stderr.lines().collect();
    if lines.len() <= TRACEBACK_TAIL_LINES {
        return stderr.trim_end().to_string();
    }
    lines[lines.len() - TRACEBACK_TAIL_LINES..].join("\n")
}

/// Cuts text down to `max_chars` by removing a middle span, keeping the
/// head and the tail intact.
fn middle_elide(text: &str, max_chars: usize) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= max_chars {
        return text.to_string();
    }
    let marker = "\n... [elided] ...\n";
    let keep = max_chars.saturating_sub(marker.chars().count()).max(2);
    let head = keep / 2;
    let tail = keep - head;
    let mut result: String = chars[..head].iter().collect();
    result.push_str(marker);
    result.extend(chars[chars.len() - tail..].iter());
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::problem::BenchmarkKind;
    use crate::gateway::{FnBackend, ScriptRule, ScriptedMock};
    use crate::genome::{GenomeId, ModelId, StageGene};
    use crate::sandbox::SandboxExecutor;
    use std::sync::Mutex;
    use std::time::Duration;

    fn problem() -> Problem {
        Problem {
            benchmark: BenchmarkKind::HumanEval,
            problem_id: "HumanEval/0".into(),
            statement: "def identity(x):\n    \"\"\"Return x unchanged.\"\"\"\n".into(),
            test_block: "def check(candidate):\n    assert candidate(3) == 3\n\ncheck(identity)\n"
                .into(),
            entry_point: Some("identity".into()),
        }
    }

    fn node(model: &str, prompt: usize) -> LlmNodeConfig {
        LlmNodeConfig {
            model: ModelId::from(model),
            prompt_index: prompt,
            temperature: 0.5,
        }
    }

    fn one_stage_genome(max_iterations: u32, analyzer: bool) -> PipelineGenome {
        PipelineGenome {
            genome_id: GenomeId::new("g0000-00"),
            generator: node("m-gen", 0),
            stages: vec![StageGene {
                innovation: 1,
                max_iterations,
                analyzer: analyzer.then(|| node("m-ana", 0)),
                refiner: node("m-ref", 0),
            }],
        }
    }

    /// Scripted executor keyed on a marker substring in the code.
    struct MarkerExecutor;

    impl CodeExecutor for MarkerExecutor {
        fn execute(&self, code: &str, _tests: &str) -> ExecutionOutcome {
            let passed = code.contains("GOOD");
            ExecutionOutcome {
                passed,
                exit_code: if passed { 0 } else { 1 },
                stdout: String::new(),
                stderr: if passed {
                    String::new()
                } else {
                    "Traceback (most recent call last):\n  File \"c.py\", line 1, in <module>\nNameError: name 'g' is not defined".into()
                },
                error_type: if passed { ErrorType::None } else { ErrorType::NameError },
                duration: 0.01,
            }
        }
    }

    #[test]
    fn passing_generator_early_stops_without_refiner_calls() {
        let genome = one_stage_genome(3, false);
        let mock = ScriptedMock::from_rules(vec![ScriptRule::for_role(
            NodeRole::Generator,
            "```\ndef identity(x):\n    return x  # GOOD\n```",
        )]);
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions::default(),
        );
        assert!(trace.passed);
        assert!(trace.early_stopped);
        assert!(trace.initial_passed);
        assert_eq!(trace.events.len(), 1);
        let executions = trace
            .events
            .iter()
            .filter(|e| e.nodes_invoked.iter().any(|n| n == "executor"))
            .count();
        assert_eq!(executions, 1);
        assert!(!trace.events[0]
            .nodes_invoked
            .iter()
            .any(|n| n.starts_with("refiner")));
    }

    #[test]
    fn failed_generation_then_passing_refinement() {
        // Generator fails (NameError), refiner emits passing code,
        // budget 3: pass after one refinement, two executions total.
        let genome = one_stage_genome(3, false);
        let mock = ScriptedMock::from_rules(vec![
            ScriptRule::for_role(NodeRole::Generator, "```\ndef identity(x):\n    return y\n```"),
            ScriptRule::for_role(NodeRole::Refiner, "```\ndef identity(x):\n    return x  # GOOD\n```"),
        ]);
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions::default(),
        );
        assert!(trace.passed);
        assert!(trace.early_stopped);
        assert!(!trace.initial_passed);
        assert_eq!(trace.events.len(), 2);
        let executions: usize = trace
            .events
            .iter()
            .map(|e| e.nodes_invoked.iter().filter(|n| *n == "executor").count())
            .sum();
        assert_eq!(executions, 2);
        let refinements = trace.events.iter().filter(|e| e.code_after.is_some()).count();
        assert_eq!(refinements, 1);
        // The feedback for the failed iteration names the error verbatim.
        let feedback = trace.events[0].feedback.as_deref().unwrap();
        assert!(feedback.contains("NameError"));
        assert!(feedback.contains("name 'g' is not defined"));
    }

    #[test]
    fn no_early_stopping_lets_the_refiner_break_correct_code() {
        // Generator passes; without early stopping the refiner corrupts it.
        let genome = one_stage_genome(1, false);
        let mock = ScriptedMock::from_rules(vec![
            ScriptRule::for_role(NodeRole::Generator, "```\ndef identity(x):\n    return x  # GOOD\n```"),
            ScriptRule::for_role(NodeRole::Refiner, "```\ndef identity(x):\n    return None  # BAD\n```"),
        ]);
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions {
                early_stopping: false,
                force_temperature: None,
            },
        );
        assert!(trace.initial_passed);
        assert!(!trace.passed, "the regression must surface in the final flag");
        assert!(!trace.early_stopped);
        // Iteration event plus the final verification execution.
        assert_eq!(trace.events.len(), 2);
        assert_eq!(trace.events[1].iteration_index, 1);
    }

    #[test]
    fn executor_invocations_bounded_by_budgets_plus_one() {
        let genome = one_stage_genome(3, false);
        let mock = ScriptedMock::from_rules(vec![
            ScriptRule::for_role(NodeRole::Generator, "```\ndef identity(x):\n    return y\n```"),
            ScriptRule::for_role(NodeRole::Refiner, "```\ndef identity(x):\n    return z\n```"),
        ]);
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions::default(),
        );
        assert!(!trace.passed);
        let executions: usize = trace
            .events
            .iter()
            .map(|e| e.nodes_invoked.iter().filter(|n| *n == "executor").count())
            .sum();
        assert!(executions <= 1 + 3 + 1);
        assert_eq!(executions, 4); // 3 iterations + final verification
        // Events are strictly ordered by (stage, iteration).
        let order: Vec<(usize, u32)> = trace
            .events
            .iter()
            .map(|e| (e.stage_index, e.iteration_index))
            .collect();
        let mut sorted = order.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(order, sorted);
    }

    #[test]
    fn analyzer_output_reaches_the_refiner_prompt() {
        let genome = one_stage_genome(1, true);
        let seen = Mutex::new(Vec::<String>::new());
        let backend = FnBackend(|request: &GenerationRequest| {
            Ok(match request.role {
                NodeRole::Generator => "```\ndef identity(x):\n    return y\n```".to_string(),
                NodeRole::Analyzer => "the variable y is undefined; return x instead".to_string(),
                NodeRole::Refiner => "```\ndef identity(x):\n    return x  # GOOD\n```".to_string(),
            })
        });
        // Wrap to capture refiner prompts.
        struct Capture<'a, B>(&'a B, &'a Mutex<Vec<String>>);
        impl<B: Backend> Backend for Capture<'_, B> {
            fn generate(
                &self,
                request: &GenerationRequest,
            ) -> Result<crate::gateway::GenerationResponse, GatewayError> {
                if request.role == NodeRole::Refiner {
                    self.1.lock().unwrap().push(request.user_prompt.clone());
                }
                self.0.generate(request)
            }
            fn kind(&self) -> crate::gateway::BackendKind {
                self.0.kind()
            }
        }
        let trace = run_pipeline(
            &genome,
            &problem(),
            &Capture(&backend, &seen),
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions::default(),
        );
        assert!(trace.passed);
        let prompts = seen.lock().unwrap();
        assert_eq!(prompts.len(), 1);
        assert!(prompts[0].contains("Analysis of the failure:"));
        assert!(prompts[0].contains("y is undefined"));
        assert_eq!(
            trace.events[0].analyzer_text.as_deref(),
            Some("the variable y is undefined; return x instead")
        );
    }

    #[test]
    fn refiner_gateway_failure_records_gateway_error_and_keeps_code() {
        let genome = one_stage_genome(2, false);
        // Only the generator has a rule; refiner requests find no match.
        let mock = ScriptedMock::from_rules(vec![ScriptRule::for_role(
            NodeRole::Generator,
            "```\ndef identity(x):\n    return y\n```",
        )]);
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions::default(),
        );
        assert!(!trace.passed);
        assert_eq!(trace.events[0].outcome.error_type, ErrorType::GatewayError);
        assert!(trace.events[0].code_after.is_none());
        // Both iterations re-execute the same (unchanged) code.
        assert_eq!(trace.events[0].code_before, trace.events[1].code_before);
    }

    #[test]
    fn generator_gateway_failure_yields_failed_trace() {
        let genome = one_stage_genome(1, false);
        let mock = ScriptedMock::from_rules(vec![]);
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions::default(),
        );
        assert!(!trace.passed);
        assert!(!trace.initial_passed);
        assert_eq!(trace.events.len(), 1);
        assert_eq!(trace.events[0].outcome.error_type, ErrorType::GatewayError);
    }

    #[test]
    fn degenerate_refiner_output_keeps_prior_code() {
        let genome = one_stage_genome(1, false);
        let mock = ScriptedMock::from_rules(vec![
            ScriptRule::for_role(NodeRole::Generator, "```\ndef identity(x):\n    return y\n```"),
            ScriptRule::for_role(NodeRole::Refiner, "   "),
        ]);
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions::default(),
        );
        assert!(trace.events[0].degenerate_output);
        assert_eq!(
            trace.events[0].code_after.as_deref(),
            Some(trace.events[0].code_before.as_str())
        );
    }

    #[test]
    fn force_temperature_zero_reaches_the_backend() {
        let genome = one_stage_genome(1, false);
        let backend = FnBackend(|request: &GenerationRequest| {
            assert_eq!(request.temperature, 0.0);
            Ok("```\ndef identity(x):\n    return x  # GOOD\n```".to_string())
        });
        let trace = run_pipeline(
            &genome,
            &problem(),
            &backend,
            &PromptPool::builtin(),
            &MarkerExecutor,
            RunOptions {
                early_stopping: true,
                force_temperature: Some(0.0),
            },
        );
        assert!(trace.passed);
    }

    #[test]
    fn feedback_is_deterministic_and_bounded() {
        let outcome = ExecutionOutcome {
            passed: false,
            exit_code: 1,
            stdout: String::new(),
            stderr: (0..500)
                .map(|i| format!("  File \"x.py\", line {i}, in f{i}"))
                .collect::<Vec<_>>()
                .join("\n")
                + "\nNameError: name 'q' is not defined",
            error_type: ErrorType::NameError,
            duration: 0.1,
        };
        let a = format_feedback("problem text", "def f(): pass", &outcome);
        let b = format_feedback("problem text", "def f(): pass", &outcome);
        assert_eq!(a, b);
        assert!(a.chars().count() <= FEEDBACK_CHAR_BUDGET);
        // Head of the included tail and the final exception line survive.
        assert!(a.contains("NameError: name 'q' is not defined"));
        assert!(a.contains("Error type: NameError"));
        // 501 stderr lines total; the kept tail starts at frame 471.
        let tail_start = 501 - TRACEBACK_TAIL_LINES;
        assert!(a.contains(&format!("line {tail_start}")), "tail head preserved");
    }

    #[test]
    fn oversized_code_is_elided_but_keeps_head_and_tail() {
        let outcome = ExecutionOutcome {
            passed: false,
            exit_code: 1,
            stdout: String::new(),
            stderr: "AssertionError".into(),
            error_type: ErrorType::AssertionError,
            duration: 0.1,
        };
        let code = format!("def head():\n{}\ndef tail(): pass", "    x = 1\n".repeat(4000));
        let feedback = format_feedback("p", &code, &outcome);
        assert!(feedback.chars().count() <= FEEDBACK_CHAR_BUDGET);
        assert!(feedback.contains("def head()"));
        assert!(feedback.contains("def tail(): pass"));
        assert!(feedback.contains("[elided]"));
    }

    #[test]
    fn real_sandbox_end_to_end_repair() {
        // Full integration: scripted models, real subprocess execution.
        let genome = one_stage_genome(2, false);
        let mock = ScriptedMock::from_rules(vec![
            ScriptRule::for_role(NodeRole::Generator, "```\ndef identity(x):\n    return missing_name\n```"),
            ScriptRule::for_role(NodeRole::Refiner, "```\ndef identity(x):\n    return x\n```"),
        ]);
        let executor = SandboxExecutor::new().with_timeout(Duration::from_secs(5));
        let trace = run_pipeline(
            &genome,
            &problem(),
            &mock,
            &PromptPool::builtin(),
            &executor,
            RunOptions::default(),
        );
        assert!(!trace.initial_passed);
        assert!(trace.passed, "refined code must pass; events: {:#?}", trace.events.len());
        assert_eq!(trace.events[0].outcome.error_type, ErrorType::NameError);
    }
}
