//! Command-line entry point. Thin dispatch over the library: `evolve`,
//! `validate`, `report`, `noise-study`, and `exec-one`.
//!
//! Exit codes: 0 success, 1 user error (bad flags, bad config, missing
//! files), 2 environment error (gateway or interpreter unavailable).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use evopipe::bench::report::{
    render_ceiling, render_config_means, render_iterations, render_noise, render_significance,
    render_taxonomy, significance_rows,
};
use evopipe::bench::stats::{
    error_taxonomy, hard_ceiling, iteration_analysis, noise_empirical, noise_simulation,
    NoiseSimParams,
};
use evopipe::bench::{
    evaluate_config, load_benchmark, BenchmarkKind, ConfigUnderTest, EvalMode, TraceStore,
    ValidationSummary,
};
use evopipe::config::RunConfig;
use evopipe::engine::{load_difficulty, run_search, EngineError, SearchContext};
use evopipe::genome::{parse_genome, EvalRegime};
use evopipe::sandbox::{CodeExecutor, ErrorType, SandboxExecutor};

#[derive(Parser)]
#[command(
    name = "evopipe",
    about = "Evolutionary search over small-LLM code-generation pipelines with execution feedback",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary search and write run artifacts.
    Evolve(EvolveArgs),
    /// Full-benchmark multi-run validation of one genome.
    Validate(ValidateArgs),
    /// Render analysis tables from a validation run directory.
    Report(ReportArgs),
    /// Selection-bias study: Monte Carlo simulation or empirical table.
    NoiseStudy(NoiseStudyArgs),
    /// Execute one code file against one test file in the sandbox.
    ExecOne(ExecOneArgs),
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    generations: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Force temperature 0 on every call during search evaluation.
    #[arg(long)]
    deterministic: bool,
    /// Uniform random subsets instead of stratified difficulty columns.
    #[arg(long)]
    no_stratify: bool,
    /// Continue from the run directory's checkpoint.
    #[arg(long)]
    resume: bool,
    /// Benchmark the search evaluates on.
    #[arg(long, default_value = "humaneval")]
    benchmark: BenchmarkKind,
    /// Overrides the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Genome record file to validate.
    #[arg(long)]
    genome: PathBuf,
    #[arg(long, default_value = "humaneval")]
    benchmark: BenchmarkKind,
    #[arg(long, default_value_t = 5)]
    runs: u32,
    /// Refine through full budgets even after a pass (regression analysis).
    #[arg(long)]
    no_early_stopping: bool,
    /// Evaluate the generator only (solo baseline).
    #[arg(long)]
    solo: bool,
    /// Label in the stored summary; defaults to the genome file stem.
    #[arg(long)]
    label: Option<String>,
    /// Validation run directory (defaults to the config's output_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Comma-separated: means,significance,taxonomy,iterations,noise,ceiling.
    #[arg(long, default_value = "means,significance,taxonomy,iterations,noise,ceiling")]
    tables: String,
}

#[derive(Args)]
struct NoiseStudyArgs {
    /// Empirical mode: read stored validation results from this directory.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    genomes: usize,
    #[arg(long, default_value_t = 0.5)]
    true_p: f64,
    #[arg(long, default_value_t = 25)]
    subset: u32,
    /// Evaluations averaged per genome; 0 means the exact (noise-free) analog.
    #[arg(long, default_value_t = 1)]
    evals: u32,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ExecOneArgs {
    #[arg(long)]
    code: PathBuf,
    #[arg(long)]
    tests: PathBuf,
    #[arg(long, default_value_t = 10)]
    timeout_secs: u64,
}

/// User error (exit 1) vs environment error (exit 2).
enum CliError {
    User(String),
    Environment(String),
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::GatewayDown { .. } => CliError::Environment(e.to_string()),
            other => CliError::User(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit 0.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let result = match cli.command {
        Command::Evolve(args) => cmd_evolve(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Report(args) => cmd_report(args),
        Command::NoiseStudy(args) => cmd_noise_study(args),
        Command::ExecOne(args) => cmd_exec_one(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Environment(message)) => {
            eprintln!("environment error: {message}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(|e| CliError::User(e.to_string()))
}

fn load_problems(
    config: &RunConfig,
    kind: BenchmarkKind,
) -> Result<Vec<evopipe::bench::Problem>, CliError> {
    let path = config
        .benchmark_path(kind)
        .ok_or_else(|| CliError::User(format!("config has no path for benchmark `{kind}`")))?;
    load_benchmark(kind, path).map_err(|e| CliError::User(e.to_string()))
}

fn cmd_evolve(args: EvolveArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let seed = args
        .seed
        .or(config.seed)
        .ok_or_else(|| CliError::User("no seed: pass --seed or set it in the config".into()))?;
    let problems = load_problems(&config, args.benchmark)?;
    let mut params = config.search.clone();
    if args.deterministic {
        params.eval_regime = EvalRegime::Deterministic;
    }
    let difficulty = match &config.difficulty_table {
        Some(path) => Some(load_difficulty(path).map_err(|e| CliError::User(e.to_string()))?),
        None => None,
    };
    let gateway = config.build_backend().map_err(|e| CliError::User(e.to_string()))?;
    let prompts = config.prompt_pool().map_err(|e| CliError::User(e.to_string()))?;
    let executor = sandbox_executor()?;
    let out_dir = args.out_dir.clone().or_else(|| config.output_dir.clone());

    let ctx = SearchContext {
        params: &params,
        model_pool: &config.model_pool(),
        problems: &problems,
        difficulty: difficulty.as_ref(),
        gateway: gateway.as_ref(),
        executor: &executor,
        prompts: &prompts,
        stratify: !args.no_stratify,
        out_dir: out_dir.as_deref(),
        resume: args.resume,
    };
    let result = run_search(&ctx, args.generations, seed)?;
    println!(
        "champion {} from generation {}: raw {} fitness {:.2}",
        result.champion.genome.genome_id,
        result.champion.generation,
        result.champion.raw_passes,
        result.champion.fitness
    );
    if let Some(dir) = out_dir {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let text = std::fs::read_to_string(&args.genome)
        .map_err(|e| CliError::User(format!("{}: {e}", args.genome.display())))?;
    let genome = parse_genome(&text).map_err(|e| CliError::User(e.to_string()))?;
    genome
        .validate_models(&config.model_pool())
        .map_err(|e| CliError::User(e.to_string()))?;
    let problems = load_problems(&config, args.benchmark)?;
    let gateway = config.build_backend().map_err(|e| CliError::User(e.to_string()))?;
    let prompts = config.prompt_pool().map_err(|e| CliError::User(e.to_string()))?;
    let executor = sandbox_executor()?;

    let label = args.label.unwrap_or_else(|| {
        let stem = args
            .genome
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "genome".into());
        let mut label = stem;
        if args.solo {
            label.push_str("-solo");
        }
        if args.no_early_stopping {
            label.push_str("-noes");
        }
        label
    });

    let cfg = ConfigUnderTest {
        label: label.clone(),
        genome,
        early_stopping: !args.no_early_stopping,
        runs: args.runs,
        mode: if args.solo {
            EvalMode::GeneratorOnly
        } else {
            EvalMode::Pipeline
        },
    };

    let out_dir = args.out_dir.or_else(|| config.output_dir.clone());
    let store = out_dir.as_ref().map(TraceStore::new);
    let stored = evaluate_config(
        &cfg,
        &problems,
        gateway.as_ref(),
        &prompts,
        &executor,
        store.as_ref(),
    );

    println!(
        "{}: {:.1} +- {:.1} over {} runs  (counts: {:?}){}",
        stored.label,
        stored.mean,
        stored.std,
        stored.per_run_counts.len(),
        stored.per_run_counts,
        if stored.incomplete { "  INCOMPLETE" } else { "" },
    );

    if stored.incomplete {
        return Err(CliError::Environment(
            "validation aborted: the gateway failed for a whole run".into(),
        ));
    }

    if let Some(dir) = out_dir {
        let mut summary =
            ValidationSummary::load(&dir).map_err(|e| CliError::User(e.to_string()))?;
        summary.upsert(stored);
        summary.save(&dir).map_err(|e| CliError::User(e.to_string()))?;
        println!("summary updated in {}", dir.display());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let summary = ValidationSummary::load(&args.run_dir)
        .map_err(|e| CliError::User(format!("{}: {e}", args.run_dir.display())))?;
    if summary.configs.is_empty() {
        return Err(CliError::User(format!(
            "no validation results in {}",
            args.run_dir.display()
        )));
    }
    let store = TraceStore::new(&args.run_dir);
    let mut machine = serde_json::Map::new();

    for table in args.tables.split(',').map(str::trim) {
        match table {
            "means" => {
                println!("== configuration means ==\n{}", render_config_means(&summary.configs));
                machine.insert(
                    "means".into(),
                    serde_json::to_value(&summary.configs).unwrap(),
                );
            }
            "significance" => {
                let rows = significance_rows(&summary.configs);
                println!("== significance (sigma separations) ==\n{}", render_significance(&rows));
                machine.insert("significance".into(), serde_json::to_value(&rows).unwrap());
            }
            "taxonomy" => {
                println!("== error taxonomy (fix rate by iteration-0 error) ==");
                let mut all = serde_json::Map::new();
                for config in &summary.configs {
                    let traces = store
                        .load_all(&config.label)
                        .map_err(|e| CliError::User(e.to_string()))?;
                    if traces.is_empty() {
                        continue;
                    }
                    let rows = error_taxonomy(&traces);
                    println!("-- {} --\n{}", config.label, render_taxonomy(&rows));
                    all.insert(config.label.clone(), serde_json::to_value(&rows).unwrap());
                }
                machine.insert("taxonomy".into(), all.into());
            }
            "iterations" => {
                println!("== iteration analysis ==");
                let mut all = serde_json::Map::new();
                for config in summary.configs.iter().filter(|c| !c.early_stopping) {
                    let no_early = store
                        .load_all(&config.label)
                        .map_err(|e| CliError::User(e.to_string()))?;
                    let partner = config.label.trim_end_matches("-noes");
                    let early = match summary.get(partner).filter(|c| c.early_stopping) {
                        Some(p) => store
                            .load_all(&p.label)
                            .map_err(|e| CliError::User(e.to_string()))?,
                        None => Vec::new(),
                    };
                    let report = iteration_analysis(&no_early, &early);
                    println!("-- {} --\n{}", config.label, render_iterations(&report));
                    all.insert(config.label.clone(), serde_json::to_value(&report).unwrap());
                }
                if all.is_empty() {
                    println!("(no configurations validated with --no-early-stopping)");
                }
                machine.insert("iterations".into(), all.into());
            }
            "noise" => {
                let rows = noise_empirical(&summary.configs);
                println!("== single-run vs multi-run means ==\n{}", render_noise(&rows));
                machine.insert("noise".into(), serde_json::to_value(&rows).unwrap());
            }
            "ceiling" => {
                let matrices: Vec<_> = summary.configs.iter().map(|c| &c.matrix).collect();
                let mut traces = Vec::new();
                for config in &summary.configs {
                    traces.extend(
                        store
                            .load_all(&config.label)
                            .map_err(|e| CliError::User(e.to_string()))?,
                    );
                }
                let report = hard_ceiling(&matrices, &traces);
                println!("== hard ceiling ==\n{}", render_ceiling(&report));
                machine.insert("ceiling".into(), serde_json::to_value(&report).unwrap());
            }
            other => {
                return Err(CliError::User(format!(
                    "unknown table `{other}` (expected means, significance, taxonomy, iterations, noise, ceiling)"
                )))
            }
        }
    }

    let machine_path = args.run_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(machine)).unwrap();
    text.push('\n');
    std::fs::write(&machine_path, text)
        .map_err(|e| CliError::User(format!("{}: {e}", machine_path.display())))?;
    println!("machine-readable report written to {}", machine_path.display());
    Ok(())
}

fn cmd_noise_study(args: NoiseStudyArgs) -> Result<(), CliError> {
    if let Some(run_dir) = args.run_dir {
        let summary = ValidationSummary::load(&run_dir)
            .map_err(|e| CliError::User(format!("{}: {e}", run_dir.display())))?;
        let rows = noise_empirical(&summary.configs);
        println!("{}", render_noise(&rows));
        return Ok(());
    }
    let params = NoiseSimParams {
        genome_count: args.genomes,
        subset_size: args.subset,
        true_p: vec![args.true_p],
        eval_runs: (args.evals > 0).then_some(args.evals),
        trials: args.trials,
        seed: args.seed,
    };
    let result = noise_simulation(&params);
    println!(
        "selection inflation over {} genomes (p={}, {} problems, {} eval{}): {:+.2} problems",
        args.genomes,
        args.true_p,
        args.subset,
        args.evals,
        if args.evals == 1 { "" } else { "s" },
        result.expected_inflation
    );
    println!(
        "selected genome: observed {:.2}, true {:.2}",
        result.mean_selected_observed, result.mean_selected_true
    );
    Ok(())
}

fn cmd_exec_one(args: ExecOneArgs) -> Result<(), CliError> {
    let code = std::fs::read_to_string(&args.code)
        .map_err(|e| CliError::User(format!("{}: {e}", args.code.display())))?;
    let tests = std::fs::read_to_string(&args.tests)
        .map_err(|e| CliError::User(format!("{}: {e}", args.tests.display())))?;
    let executor = SandboxExecutor::new().with_timeout(Duration::from_secs(args.timeout_secs));
    let outcome = executor.execute(&code, &tests);
    let mut text = serde_json::to_string_pretty(&outcome).unwrap();
    text.push('\n');
    print!("{text}");
    if outcome.error_type == ErrorType::HarnessError {
        return Err(CliError::Environment(outcome.stderr));
    }
    Ok(())
}

fn sandbox_executor() -> Result<SandboxExecutor, CliError> {
    let executor = SandboxExecutor::new();
    if !executor.is_available() {
        return Err(CliError::Environment(
            "no usable interpreter: install python3 or set EVOPIPE_PYTHON".into(),
        ));
    }
    Ok(executor)
}
