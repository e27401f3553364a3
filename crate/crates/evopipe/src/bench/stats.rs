//! Statistical analyses over validation results and pipeline traces.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::rng::derive_rng;
use crate::runtime::PipelineTrace;
use crate::sandbox::ErrorType;

use super::{SolveMatrix, StoredConfig};

/// Mean and sample standard deviation (n-1 denominator) of run counts.
/// A single run has no spread estimate and reports 0.
pub fn mean_std(counts: &[u32]) -> (f64, f64) {
    if counts.is_empty() {
        return (0.0, 0.0);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    if counts.len() < 2 {
        return (mean, 0.0);
    }
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var.sqrt())
}

/// Separation between two configuration means in standard deviations:
/// `|mean_a - mean_b| / sqrt(std_a^2 + std_b^2)`.
///
/// A descriptive effect size, not a hypothesis test. When both stds are
/// zero: equal means give 0, unequal means give the +infinity sentinel.
/// Symmetric in its argument pairs, and scale-covariant — multiplying all
/// four inputs by a positive constant leaves the result unchanged.
pub fn sigma_separation(mean_a: f64, std_a: f64, mean_b: f64, std_b: f64) -> f64 {
    let diff = (mean_a - mean_b).abs();
    let spread = (std_a * std_a + std_b * std_b).sqrt();
    if spread == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / spread
    }
}

/// Fix rate of one error type: of the problems whose iteration-0 outcome
/// had this error, how many ended passed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyRow {
    pub error_type: ErrorType,
    /// Problems whose first execution failed with this error.
    pub failures: usize,
    /// Of those, problems the pipeline ultimately solved.
    pub fixed: usize,
    pub fix_rate: f64,
    /// Fewer than 5 samples; interpret with caution.
    pub small_sample: bool,
}

/// Builds the error-taxonomy table from traces of one configuration.
/// Error types with zero initial failures are omitted.
pub fn error_taxonomy(traces: &[PipelineTrace]) -> Vec<TaxonomyRow> {
    let mut rows: BTreeMap<ErrorType, (usize, usize)> = BTreeMap::new();
    for trace in traces {
        let Some(first) = trace.events.first() else {
            continue;
        };
        if first.outcome.passed {
            continue;
        }
        let entry = rows.entry(first.outcome.error_type).or_insert((0, 0));
        entry.0 += 1;
        if trace.passed {
            entry.1 += 1;
        }
    }
    rows.into_iter()
        .map(|(error_type, (failures, fixed))| TaxonomyRow {
            error_type,
            failures,
            fixed,
            fix_rate: fixed as f64 / failures as f64,
            small_sample: failures < 5,
        })
        .collect()
}

/// Pass state after each refinement iteration, from a no-early-stopping
/// trace: index 0 is the initial execution, index k the execution after k
/// refinements (the last entry is the final verification).
pub fn pass_series(trace: &PipelineTrace) -> Vec<bool> {
    trace.events.iter().map(|e| e.outcome.passed).collect()
}

/// Iteration at which an early-stopping trace solved its problem (number
/// of refinements before the passing execution), or `None` if it never
/// passed.
pub fn solved_at(trace: &PipelineTrace) -> Option<usize> {
    trace.passed.then(|| trace.events.len() - 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetRow {
    pub iteration: usize,
    /// Problems failing at k-1 and passing at k.
    pub fixes: usize,
    /// Problems passing at k-1 and failing at k.
    pub regressions: usize,
    pub net: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub initial_passes: usize,
    /// Initially-passing problems that some refinement broke.
    pub broke: usize,
    pub break_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationReport {
    /// Per-iteration fixes minus regressions, without early stopping.
    pub net: Vec<NetRow>,
    /// Problems solved at or before budget k, with early stopping;
    /// non-decreasing in k by construction.
    pub cumulative: Vec<usize>,
    pub regression: RegressionSummary,
    /// Iterations analyzed (the smallest common budget).
    pub budget: usize,
    /// Traces carried different budgets; analysis restricted to the common one.
    pub mixed_budgets: bool,
}

/// Builds the iteration-value analysis from paired trace sets of the same
/// configuration: one evaluated without early stopping (full budgets), one
/// with it.
pub fn iteration_analysis(
    no_early_stop: &[PipelineTrace],
    early_stop: &[PipelineTrace],
) -> IterationReport {
    let series: Vec<Vec<bool>> = no_early_stop.iter().map(pass_series).collect();
    let budgets: Vec<usize> = series.iter().map(|s| s.len().saturating_sub(1)).collect();
    let budget = budgets.iter().copied().min().unwrap_or(0);
    let mixed_budgets = budgets.iter().any(|&b| b != budget);
    if mixed_budgets {
        log::warn!("iteration analysis: mixed budgets, restricting to {budget}");
    }

    let mut net = Vec::new();
    for k in 1..=budget {
        let mut fixes = 0usize;
        let mut regressions = 0usize;
        for s in &series {
            match (s[k - 1], s[k]) {
                (false, true) => fixes += 1,
                (true, false) => regressions += 1,
                _ => {}
            }
        }
        net.push(NetRow {
            iteration: k,
            fixes,
            regressions,
            net: fixes as i64 - regressions as i64,
        });
    }

    let initial_passes = series.iter().filter(|s| s.first().copied().unwrap_or(false)).count();
    let broke = series
        .iter()
        .filter(|s| s.first().copied().unwrap_or(false) && s[1..=budget.min(s.len() - 1)].iter().any(|&p| !p))
        .count();
    let regression = RegressionSummary {
        initial_passes,
        broke,
        break_rate: if initial_passes == 0 {
            0.0
        } else {
            broke as f64 / initial_passes as f64
        },
    };

    let solved: Vec<Option<usize>> = early_stop.iter().map(solved_at).collect();
    let cumulative: Vec<usize> = (0..=budget)
        .map(|k| solved.iter().filter(|s| s.is_some_and(|j| j <= k)).count())
        .collect();

    IterationReport {
        net,
        cumulative,
        regression,
        budget,
        mixed_budgets,
    }
}

/// Parameters of the selection-bias simulation: `genome_count` genomes with
/// per-problem pass probability `true_p`, each observed through
/// `eval_runs` evaluations on a `subset_size`-problem sample, the best
/// observed genome selected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSimParams {
    pub genome_count: usize,
    pub subset_size: u32,
    /// One entry per genome, or a single entry shared by all.
    pub true_p: Vec<f64>,
    /// Evaluations averaged per genome; `None` reads off the exact
    /// expectation (the infinite-evaluation analog — zero noise).
    pub eval_runs: Option<u32>,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSimResult {
    /// E[selected observed score - selected true score], in problems.
    pub expected_inflation: f64,
    pub mean_selected_observed: f64,
    pub mean_selected_true: f64,
}

/// Monte Carlo estimate of how much single-evaluation selection inflates
/// the winner's observed score over its true quality.
pub fn noise_simulation(params: &NoiseSimParams) -> NoiseSimResult {
    assert!(params.genome_count > 0, "need at least one genome");
    let probs: Vec<f64> = if params.true_p.len() == 1 {
        vec![params.true_p[0]; params.genome_count]
    } else {
        assert_eq!(params.true_p.len(), params.genome_count, "one p per genome");
        params.true_p.clone()
    };
    let n = params.subset_size;

    let Some(eval_runs) = params.eval_runs else {
        // Exact expectations: the observed score equals the true score, so
        // selection picks the best true genome and inflation is zero.
        let best = probs.iter().copied().fold(f64::MIN, f64::max) * n as f64;
        return NoiseSimResult {
            expected_inflation: 0.0,
            mean_selected_observed: best,
            mean_selected_true: best,
        };
    };

    let mut rng = derive_rng(params.seed, "noise-sim", 0);
    let mut sum_observed = 0.0;
    let mut sum_true = 0.0;
    for _ in 0..params.trials {
        let mut best_observed = f64::MIN;
        let mut best_true = 0.0;
        for &p in &probs {
            let observed = if p <= 0.0 {
                0.0
            } else if p >= 1.0 {
                f64::from(n) * eval_runs as f64
            } else {
                let binomial = Binomial::new(u64::from(n), p).expect("valid p");
                (0..eval_runs).map(|_| binomial.sample(&mut rng) as f64).sum::<f64>()
            } / eval_runs as f64;
            if observed > best_observed {
                best_observed = observed;
                best_true = p * f64::from(n);
            }
        }
        sum_observed += best_observed;
        sum_true += best_true;
    }
    let trials = params.trials as f64;
    NoiseSimResult {
        expected_inflation: (sum_observed - sum_true) / trials,
        mean_selected_observed: sum_observed / trials,
        mean_selected_true: sum_true / trials,
    }
}

/// Empirical single-run inflation: first-run count against the multi-run
/// mean, per configuration. `difference` is mean minus single, so an
/// inflated single run shows negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalNoiseRow {
    pub label: String,
    pub single_run: u32,
    pub multi_run_mean: f64,
    pub difference: f64,
}

pub fn noise_empirical(configs: &[StoredConfig]) -> Vec<EmpiricalNoiseRow> {
    configs
        .iter()
        .filter(|c| !c.per_run_counts.is_empty())
        .map(|c| {
            let single_run = c.per_run_counts[0];
            EmpiricalNoiseRow {
                label: c.label.clone(),
                single_run,
                multi_run_mean: c.mean,
                difference: c.mean - f64::from(single_run),
            }
        })
        .collect()
}

/// The hard-ceiling set: problems no configuration solved in any run, with
/// a breakdown by (modal) iteration-0 error type where traces are
/// available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardCeilingReport {
    pub never_solved: Vec<String>,
    pub breakdown: BTreeMap<String, usize>,
    pub total_problems: usize,
}

pub fn hard_ceiling(matrices: &[&SolveMatrix], traces: &[PipelineTrace]) -> HardCeilingReport {
    let mut solved: BTreeMap<&str, bool> = BTreeMap::new();
    for matrix in matrices {
        for (i, id) in matrix.problem_ids.iter().enumerate() {
            let entry = solved.entry(id).or_insert(false);
            *entry |= matrix.solved_anywhere(i);
        }
    }
    let never_solved: Vec<String> = solved
        .iter()
        .filter(|(_, &s)| !s)
        .map(|(id, _)| id.to_string())
        .collect();

    let mut breakdown = BTreeMap::new();
    for id in &never_solved {
        let mut votes: BTreeMap<ErrorType, usize> = BTreeMap::new();
        for trace in traces.iter().filter(|t| &t.problem_id == id) {
            if let Some(first) = trace.events.first() {
                *votes.entry(first.outcome.error_type).or_insert(0) += 1;
            }
        }
        if let Some((error_type, _)) = votes.into_iter().max_by_key(|&(_, n)| n) {
            *breakdown.entry(error_type.to_string()).or_insert(0) += 1;
        }
    }

    HardCeilingReport {
        never_solved,
        breakdown,
        total_problems: solved.len(),
    }
}

/// Brute-force oracle companion to [`noise_simulation`] for the iid case:
/// the exact expected maximum of `genomes` iid Binomial(n, p) draws, via
/// `P(max <= k) = CDF(k)^genomes`. Lives here for reuse by oracle tests.
pub fn exact_expected_max_binomial(n: u32, p: f64, genomes: u32) -> f64 {
    let pmf = binomial_pmf(n, p);
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for &value in &pmf {
        acc += value;
        cdf.push(acc.min(1.0));
    }
    let mut expected = 0.0;
    let mut prev_pow = 0.0;
    for k in 0..=n as usize {
        let pow = cdf[k].powi(genomes as i32);
        expected += k as f64 * (pow - prev_pow);
        prev_pow = pow;
    }
    expected
}

fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        let mut log_c = 0.0f64;
        for i in 0..k {
            log_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        let log_p = log_c + f64::from(k) * p.ln() + f64::from(n - k) * (1.0 - p).ln();
        pmf.push(log_p.exp());
    }
    pmf
}

/// Uniform random subset without replacement, used by the non-stratified
/// evaluation regime.
pub fn uniform_subset<'a, T>(items: &'a [T], size: usize, rng: &mut impl Rng) -> Vec<&'a T> {
    let mut indices: Vec<usize> = (0..items.len()).collect();
    let take = size.min(items.len());
    for i in 0..take {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    indices[..take].iter().map(|&i| &items[i]).collect()
}
