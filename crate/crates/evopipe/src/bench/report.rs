//! Plain-text rendering of the analysis tables, plus the machine-readable
//! report record written next to them.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::stats::{
    sigma_separation, EmpiricalNoiseRow, HardCeilingReport, IterationReport, TaxonomyRow,
};
use super::StoredConfig;

/// One pairwise significance row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub config_a: String,
    pub config_b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub delta: f64,
    pub sigma: f64,
}

/// All pairwise separations between stored configurations, ordered as the
/// configs appear in the summary.
pub fn significance_rows(configs: &[StoredConfig]) -> Vec<SignificanceRow> {
    let mut rows = Vec::new();
    for i in 0..configs.len() {
        for j in i + 1..configs.len() {
            let (a, b) = (&configs[i], &configs[j]);
            rows.push(SignificanceRow {
                config_a: a.label.clone(),
                config_b: b.label.clone(),
                mean_a: a.mean,
                mean_b: b.mean,
                delta: a.mean - b.mean,
                sigma: sigma_separation(a.mean, a.std, b.mean, b.std),
            });
        }
    }
    rows
}

pub fn render_significance(rows: &[SignificanceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<44} {:>10} {:>8}", "comparison", "delta", "sigma");
    for row in rows {
        let _ = writeln!(
            out,
            "{:<44} {:>+10.1} {:>8}",
            format!("{} vs {}", row.config_a, row.config_b),
            row.delta,
            if row.sigma.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:.1}", row.sigma)
            },
        );
    }
    out
}

pub fn render_config_means(configs: &[StoredConfig]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>6} {:>10} {:>8}  per-run counts",
        "configuration", "runs", "mean", "std"
    );
    for c in configs {
        let counts: Vec<String> = c.per_run_counts.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(
            out,
            "{:<28} {:>6} {:>10.1} {:>8.1}  [{}]{}",
            c.label,
            c.per_run_counts.len(),
            c.mean,
            c.std,
            counts.join(", "),
            if c.incomplete { " (incomplete)" } else { "" },
        );
    }
    out
}

pub fn render_taxonomy(rows: &[TaxonomyRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>8} {:>9}  note",
        "error type", "n", "fixed", "fix rate"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>8.0}%  {}",
            row.error_type.to_string(),
            row.failures,
            row.fixed,
            row.fix_rate * 100.0,
            if row.small_sample { "small sample" } else { "" },
        );
    }
    out
}

pub fn render_iterations(report: &IterationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "net value per iteration (no early stopping):");
    let _ = writeln!(out, "{:<10} {:>8} {:>12} {:>8}", "iteration", "fixes", "regressions", "net");
    for row in &report.net {
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>12} {:>+8}",
            row.iteration, row.fixes, row.regressions, row.net
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "cumulative solves by budget (early stopping):");
    let budgets: Vec<String> = (0..report.cumulative.len()).map(|k| format!("iters={k}")).collect();
    let _ = writeln!(out, "{}", budgets.join("  "));
    let counts: Vec<String> = report
        .cumulative
        .iter()
        .enumerate()
        .map(|(k, n)| format!("{:>width$}", n, width = budgets[k].len()))
        .collect();
    let _ = writeln!(out, "{}", counts.join("  "));
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "regressions: {} of {} initially-passing problems broke ({:.0}%)",
        report.regression.broke,
        report.regression.initial_passes,
        report.regression.break_rate * 100.0
    );
    if report.mixed_budgets {
        let _ = writeln!(out, "note: mixed budgets; analysis restricted to {} iterations", report.budget);
    }
    out
}

pub fn render_noise(rows: &[EmpiricalNoiseRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>12} {:>12} {:>12}",
        "configuration", "single-run", "multi-mean", "difference"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:<28} {:>12} {:>12.1} {:>+12.1}",
            row.label, row.single_run, row.multi_run_mean, row.difference
        );
    }
    out
}

pub fn render_ceiling(report: &HardCeilingReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "never solved: {} of {} problems",
        report.never_solved.len(),
        report.total_problems
    );
    for id in &report.never_solved {
        let _ = writeln!(out, "  {id}");
    }
    if !report.breakdown.is_empty() {
        let _ = writeln!(out, "by iteration-0 error type:");
        for (error, count) in &report.breakdown {
            let _ = writeln!(out, "  {error:<16} {count}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{EvalMode, SolveMatrix};

    fn config(label: &str, mean: f64, std: f64) -> StoredConfig {
        StoredConfig {
            label: label.into(),
            benchmark: None,
            early_stopping: true,
            mode: EvalMode::Pipeline,
            per_run_counts: vec![mean as u32],
            mean,
            std,
            incomplete: false,
            matrix: SolveMatrix {
                problem_ids: vec![],
                runs: vec![],
            },
        }
    }

    #[test]
    fn significance_rows_cover_all_pairs() {
        let configs = vec![
            config("solo", 76.6, 3.7),
            config("self-refine", 94.0, 2.7),
            config("champion", 98.2, 3.4),
        ];
        let rows = significance_rows(&configs);
        assert_eq!(rows.len(), 3);
        let text = render_significance(&rows);
        assert!(text.contains("solo vs self-refine"));
        assert!(text.contains("champion"));
    }

    #[test]
    fn rendered_tables_are_nonempty_and_stable() {
        let configs = vec![config("a", 10.0, 1.0), config("b", 12.0, 1.0)];
        let rows = significance_rows(&configs);
        assert_eq!(render_significance(&rows), render_significance(&rows));
        assert!(render_config_means(&configs).contains("a"));
    }
}
