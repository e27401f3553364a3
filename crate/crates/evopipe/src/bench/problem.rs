//! Benchmark problems and loaders.
//!
//! Two benchmarks are supported, in their canonical public record schemas:
//!
//! - HumanEval: line-delimited JSON records with `task_id`, `prompt`
//!   (function signature + docstring), `entry_point`, and `test` (a
//!   `check(candidate)` function). The assembled test block appends the
//!   invocation of the checker on the entry point.
//! - Sanitized MBPP: records with `task_id`, a natural-language
//!   description (`prompt` or `text`), `test_imports`, and `test_list`.
//!   Accepted as a JSON array file or line-delimited records.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Expected problem counts for the official files; mismatches warn but load.
const HUMANEVAL_COUNT: usize = 164;
const MBPP_SANITIZED_COUNT: usize = 427;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    HumanEval,
    MbppSanitized,
}

impl std::fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenchmarkKind::HumanEval => write!(f, "humaneval"),
            BenchmarkKind::MbppSanitized => write!(f, "mbpp-sanitized"),
        }
    }
}

impl std::str::FromStr for BenchmarkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "humaneval" => Ok(BenchmarkKind::HumanEval),
            "mbpp" | "mbpp-sanitized" => Ok(BenchmarkKind::MbppSanitized),
            other => Err(format!("unknown benchmark `{other}`")),
        }
    }
}

/// One benchmark problem with its assembled test block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    pub benchmark: BenchmarkKind,
    pub problem_id: String,
    /// What the generator sees: the HumanEval prompt (signature +
    /// docstring), or the MBPP description plus its test assertions (the
    /// assertions pin down the required function name and signature).
    pub statement: String,
    /// Assertions plus harness invocation, executed after the candidate.
    pub test_block: String,
    pub entry_point: Option<String>,
}

impl Problem {
    /// Prepares model output for execution. HumanEval models sometimes
    /// return only a completion body; when the output does not define the
    /// entry point itself, the prompt (signature + docstring) is prepended.
    /// Idempotent, so re-assembling adopted code is safe.
    pub fn assemble_candidate(&self, code: &str) -> String {
        match (&self.benchmark, &self.entry_point) {
            (BenchmarkKind::HumanEval, Some(entry)) => {
                if code.contains(&format!("def {entry}")) {
                    code.to_string()
                } else {
                    format!("{}{}", self.statement, code)
                }
            }
            _ => code.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {cause}")]
    Io { path: String, cause: String },
    #[error("{path}:{line}: parse error: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("benchmark is empty: {0}")]
    Empty(String),
}

#[derive(Deserialize)]
struct HumanEvalRecord {
    task_id: String,
    prompt: String,
    entry_point: String,
    test: String,
}

#[derive(Deserialize)]
struct MbppRecord {
    task_id: serde_json::Value,
    #[serde(alias = "text")]
    prompt: String,
    #[serde(default)]
    test_imports: Vec<String>,
    test_list: Vec<String>,
}

/// Loads a benchmark file into problems. Malformed records fail with their
/// line number; a count differing from the official benchmark size logs a
/// warning but is not fatal.
pub fn load_benchmark(kind: BenchmarkKind, path: &Path) -> Result<Vec<Problem>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
        path: path.display().to_string(),
        cause: e.to_string(),
    })?;
    let display = path.display().to_string();

    let problems = match kind {
        BenchmarkKind::HumanEval => parse_records::<HumanEvalRecord>(&text, &display)?
            .into_iter()
            .map(|r| Problem {
                benchmark: kind,
                problem_id: r.task_id,
                statement: r.prompt.clone(),
                test_block: format!("{}\n\ncheck({})\n", r.test.trim_end(), r.entry_point),
                entry_point: Some(r.entry_point),
            })
            .collect::<Vec<_>>(),
        BenchmarkKind::MbppSanitized => parse_records::<MbppRecord>(&text, &display)?
            .into_iter()
            .map(|r| {
                let tests = r.test_list.join("\n");
                let mut test_block = String::new();
                for import in &r.test_imports {
                    test_block.push_str(import);
                    test_block.push('\n');
                }
                test_block.push_str(&tests);
                test_block.push('\n');
                Problem {
                    benchmark: kind,
                    problem_id: normalize_task_id(&r.task_id),
                    statement: format!(
                        "{}\n\nYour solution must pass these tests:\n{}",
                        r.prompt.trim(),
                        tests
                    ),
                    test_block,
                    entry_point: None,
                }
            })
            .collect::<Vec<_>>(),
    };

    if problems.is_empty() {
        return Err(BenchError::Empty(display));
    }
    let expected = match kind {
        BenchmarkKind::HumanEval => HUMANEVAL_COUNT,
        BenchmarkKind::MbppSanitized => MBPP_SANITIZED_COUNT,
    };
    if problems.len() != expected {
        log::warn!(
            "{display}: loaded {} {kind} problems, official set has {expected}",
            problems.len()
        );
    }
    Ok(problems)
}

/// Parses either a JSON array file or line-delimited JSON records.
fn parse_records<T: serde::de::DeserializeOwned>(
    text: &str,
    path: &str,
) -> Result<Vec<T>, BenchError> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| BenchError::Parse {
            path: path.to_string(),
            line: e.line(),
            detail: e.to_string(),
        });
    }
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| BenchError::Parse {
            path: path.to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn normalize_task_id(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HE_LINE: &str = r#"{"task_id": "HumanEval/0", "prompt": "def add(a, b):\n    \"\"\"Add.\"\"\"\n", "entry_point": "add", "test": "def check(candidate):\n    assert candidate(1, 2) == 3", "canonical_solution": "    return a + b\n"}"#;

    #[test]
    fn humaneval_record_assembles_checker_invocation() {
        let f = write_temp(HE_LINE);
        let problems = load_benchmark(BenchmarkKind::HumanEval, f.path()).unwrap();
        assert_eq!(problems.len(), 1);
        let p = &problems[0];
        assert_eq!(p.problem_id, "HumanEval/0");
        assert_eq!(p.entry_point.as_deref(), Some("add"));
        assert!(p.test_block.ends_with("check(add)\n"));
    }

    #[test]
    fn humaneval_body_only_output_gets_prompt_prefix() {
        let f = write_temp(HE_LINE);
        let p = &load_benchmark(BenchmarkKind::HumanEval, f.path()).unwrap()[0];
        let assembled = p.assemble_candidate("    return a + b");
        assert!(assembled.starts_with("def add(a, b):"));
        assert!(assembled.ends_with("return a + b"));
        // Full-function outputs are detected by signature and left alone.
        let full = "def add(a, b):\n    return a + b";
        assert_eq!(p.assemble_candidate(full), full);
        // Idempotent on already-assembled code.
        assert_eq!(p.assemble_candidate(&assembled), assembled);
    }

    #[test]
    fn mbpp_record_joins_imports_and_assertions() {
        let record = r#"{"task_id": 2, "prompt": "Write a function to add two numbers.", "test_imports": ["import math"], "test_list": ["assert add(1, 2) == 3", "assert add(0, 0) == 0"]}"#;
        let f = write_temp(record);
        let problems = load_benchmark(BenchmarkKind::MbppSanitized, f.path()).unwrap();
        let p = &problems[0];
        assert_eq!(p.problem_id, "2");
        assert_eq!(
            p.test_block,
            "import math\nassert add(1, 2) == 3\nassert add(0, 0) == 0\n"
        );
        assert!(p.statement.contains("assert add(1, 2) == 3"));
        assert!(p.entry_point.is_none());
    }

    #[test]
    fn mbpp_json_array_file_is_accepted() {
        let record = r#"[{"task_id": 3, "text": "Do a thing.", "test_list": ["assert thing() == 1"]}]"#;
        let f = write_temp(record);
        let problems = load_benchmark(BenchmarkKind::MbppSanitized, f.path()).unwrap();
        assert_eq!(problems.len(), 1);
        assert_eq!(problems[0].problem_id, "3");
    }

    #[test]
    fn missing_test_field_reports_the_line() {
        let bad = format!("{HE_LINE}\n{{\"task_id\": \"HumanEval/1\", \"prompt\": \"p\", \"entry_point\": \"f\"}}");
        let f = write_temp(&bad);
        let err = load_benchmark(BenchmarkKind::HumanEval, f.path()).unwrap_err();
        match err {
            BenchError::Parse { line, detail, .. } => {
                assert_eq!(line, 2);
                assert!(detail.contains("test"), "got: {detail}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err =
            load_benchmark(BenchmarkKind::HumanEval, Path::new("/nonexistent/he.jsonl")).unwrap_err();
        assert!(matches!(err, BenchError::Io { .. }));
    }
}
