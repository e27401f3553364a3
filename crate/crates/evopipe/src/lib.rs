//! Evolutionary search over small-LLM code-generation pipelines with
//! sandboxed execution feedback.
//!
//! The library composes local language models into constrained linear
//! pipelines (one generator followed by 1-3 refinement stages), runs
//! candidate programs against benchmark tests in a sandboxed subprocess,
//! and searches over pipeline configurations with a NEAT-inspired
//! evolutionary algorithm: innovation-aligned crossover, seven mutation
//! operators, speciation with fitness sharing, and parsimony pressure.
//!
//! Module map:
//!
//! - [`genome`] — pipeline genomes, bounds, node accounting, serialization
//! - [`variation`] — mutation operators and innovation-aligned crossover
//! - [`speciation`] — compatibility distance, species assignment, fitness sharing
//! - [`engine`] — the generational loop, subset rotation, run artifacts
//! - [`runtime`] — executes one genome on one problem with early stopping
//! - [`sandbox`] — subprocess execution with timeout and error classification
//! - [`gateway`] — model backends (HTTP server or scripted mock), prompt pools
//! - [`bench`] — benchmark loading, multi-run validation, analysis tables
//! - [`config`] — run configuration file loading
//!
//! Start with the runnable examples (`cargo run --example mock_search`) or
//! the `evopipe` binary, which exposes the same capabilities as subcommands.

pub mod bench;
pub mod config;
pub mod engine;
pub mod gateway;
pub mod genome;
pub mod rng;
pub mod runtime;
pub mod sandbox;
pub mod speciation;
pub mod variation;
