//! Rotating evaluation subsets.
//!
//! Stratified regime: problems are sorted by difficulty (the cached
//! solo-baseline pass rate) and dealt round-robin into difficulty-balanced
//! columns; generation g evaluates column `g mod column_count`, topped up
//! from following columns with evenly spaced picks when a column is smaller
//! than the subset size. Every genome in a generation sees the identical
//! list, and generations g and g+column_count see the same subset.
//!
//! The non-stratified regime replaces columns with a uniform random subset
//! drawn from a per-generation seed stream.

use std::collections::BTreeMap;
use std::path::Path;

use crate::bench::stats::uniform_subset;
use crate::bench::Problem;
use crate::genome::SearchParams;
use crate::rng::derive_rng;

/// Problem ids for one generation's evaluation.
pub fn subset_for_generation(
    problems: &[Problem],
    difficulty: Option<&BTreeMap<String, f64>>,
    params: &SearchParams,
    generation: u32,
    stratify: bool,
    seed: u64,
) -> Vec<String> {
    if problems.len() <= params.subset_size {
        log::info!(
            "benchmark has {} problems (subset size {}); using the whole set",
            problems.len(),
            params.subset_size
        );
        return problems.iter().map(|p| p.problem_id.clone()).collect();
    }

    if !stratify {
        let mut rng = derive_rng(seed, "subset", u64::from(generation));
        return uniform_subset(problems, params.subset_size, &mut rng)
            .into_iter()
            .map(|p| p.problem_id.clone())
            .collect();
    }

    let columns = stratified_columns(problems, difficulty, params.column_count);
    let start = generation as usize % columns.len();
    let mut subset: Vec<String> = columns[start].clone();
    let mut offset = 1;
    while subset.len() < params.subset_size && offset < columns.len() {
        let donor = &columns[(start + offset) % columns.len()];
        let needed = (params.subset_size - subset.len()).min(donor.len());
        subset.extend(evenly_spaced(donor, needed).into_iter().cloned());
        offset += 1;
    }
    subset.truncate(params.subset_size);
    subset
}

/// Sorts problems by difficulty (missing entries rank as 0) and deals them
/// round-robin into `column_count` columns whose sizes differ by at most 1
/// and whose difficulty mixes are balanced.
pub fn stratified_columns(
    problems: &[Problem],
    difficulty: Option<&BTreeMap<String, f64>>,
    column_count: usize,
) -> Vec<Vec<String>> {
    let rate = |id: &str| -> f64 {
        difficulty
            .and_then(|d| d.get(id).copied())
            .unwrap_or(0.0)
    };
    let mut ids: Vec<&str> = problems.iter().map(|p| p.problem_id.as_str()).collect();
    ids.sort_by(|a, b| rate(a).total_cmp(&rate(b)).then_with(|| a.cmp(b)));

    let column_count = column_count.max(1);
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); column_count];
    for (i, id) in ids.iter().enumerate() {
        columns[i % column_count].push(id.to_string());
    }
    columns
}

/// Picks `count` evenly spaced (centered) elements, preserving the donor's
/// difficulty distribution when topping up a short column.
fn evenly_spaced<T>(items: &[T], count: usize) -> Vec<&T> {
    let count = count.min(items.len());
    (0..count)
        .map(|i| &items[(2 * i + 1) * items.len() / (2 * count)])
        .collect()
}

/// Loads a cached per-problem difficulty table: a JSON object mapping
/// problem id to baseline pass rate.
pub fn load_difficulty(path: &Path) -> std::io::Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::other(e.to_string()))
}
