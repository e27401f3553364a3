//! Sandboxed execution of candidate code plus tests.
//!
//! Each call writes code and tests to a uniquely named file inside a fresh
//! scratch directory, runs it in its own process group with a cleared
//! environment, captures stdout/stderr (capped per stream) and the exit
//! code, kills the whole process group at the timeout, and classifies the
//! failure from the last exception line of the traceback. The scratch
//! directory — and with it the temp file — is removed on every path.
//!
//! Isolation is a subprocess boundary, not a container: executed code can
//! still reach the network and the filesystem outside its scratch
//! directory. That is sufficient for benchmark programs, not for genuinely
//! hostile code.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Environment variable overriding the interpreter path.
pub const INTERPRETER_ENV: &str = "EVOPIPE_PYTHON";

/// Default execution timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Captured output is capped at 1 MiB per stream; the rest is drained and
/// discarded so print-bombs can neither exhaust memory nor stall the pipe.
pub const MAX_CAPTURE_BYTES: usize = 1024 * 1024;

/// Classified failure mode of one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    /// Execution passed.
    None,
    NameError,
    SyntaxError,
    TypeError,
    AssertionError,
    Timeout,
    ImportError,
    ValueError,
    IndexError,
    KeyError,
    /// Failed with an exception outside the tracked set.
    Other,
    /// The harness itself failed (interpreter missing, temp I/O error).
    HarnessError,
    /// A model-gateway call failed during the iteration. Never produced by
    /// the sandbox; the pipeline runtime records it.
    GatewayError,
}

impl std::fmt::Display for ErrorType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Result of one sandboxed execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub passed: bool,
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub error_type: ErrorType,
    /// Wall-clock seconds. On a timeout this is at least the budget.
    pub duration: f64,
}

impl ExecutionOutcome {
    pub(crate) fn harness_error(message: impl Into<String>, duration: f64) -> Self {
        ExecutionOutcome {
            passed: false,
            exit_code: -1,
            stdout: String::new(),
            stderr: message.into(),
            error_type: ErrorType::HarnessError,
            duration,
        }
    }
}

/// Anything that can run candidate code against a test block. The pipeline
/// runtime is written against this trait so scripted executors can stand in
/// for the subprocess sandbox in tests and synthetic search landscapes.
pub trait CodeExecutor: Sync {
    fn execute(&self, code: &str, test_block: &str) -> ExecutionOutcome;
}

/// Subprocess-based executor for Python candidates.
#[derive(Debug, Clone)]
pub struct SandboxExecutor {
    interpreter: PathBuf,
    timeout: Duration,
    scratch_root: Option<PathBuf>,
}

impl SandboxExecutor {
    /// Uses `python3` (or the `EVOPIPE_PYTHON` override) and a 10s timeout.
    pub fn new() -> Self {
        let interpreter = std::env::var_os(INTERPRETER_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("python3"));
        SandboxExecutor {
            interpreter,
            timeout: DEFAULT_TIMEOUT,
            scratch_root: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_interpreter(mut self, interpreter: impl Into<PathBuf>) -> Self {
        self.interpreter = interpreter.into();
        self
    }

    /// Parent directory for per-call scratch directories. Tests use this to
    /// scan for leaks; by default the system temp dir is used.
    pub fn with_scratch_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.scratch_root = Some(root.into());
        self
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// True when the configured interpreter can be spawned.
    pub fn is_available(&self) -> bool {
        Command::new(&self.interpreter)
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok()
    }
}

impl Default for SandboxExecutor {
    fn default() -> Self {
        Self::new()
    }
}

impl CodeExecutor for SandboxExecutor {
    fn execute(&self, code: &str, test_block: &str) -> ExecutionOutcome {
        let start = Instant::now();

        let scratch = {
            let builder_result = match &self.scratch_root {
                Some(root) => tempfile::Builder::new().prefix("evopipe-exec-").tempdir_in(root),
                None => tempfile::Builder::new().prefix("evopipe-exec-").tempdir(),
            };
            match builder_result {
                Ok(dir) => dir,
                Err(e) => {
                    return ExecutionOutcome::harness_error(
                        format!("failed to create scratch dir: {e}"),
                        start.elapsed().as_secs_f64(),
                    )
                }
            }
        };

        let program = format!("{code}\n\n{test_block}\n");
        let program_path = scratch.path().join("candidate.py");
        if let Err(e) = std::fs::write(&program_path, &program) {
            return ExecutionOutcome::harness_error(
                format!("failed to write program file: {e}"),
                start.elapsed().as_secs_f64(),
            );
        }

        let mut command = Command::new(&self.interpreter);
        command
            .arg(&program_path)
            .current_dir(scratch.path())
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            // Own process group so the timeout kill reaps grandchildren too.
            command.process_group(0);
        }

        let mut child = match command.spawn() {
            Ok(child) => child,
            Err(e) => {
                return ExecutionOutcome::harness_error(
                    format!("failed to spawn interpreter {:?}: {e}", self.interpreter),
                    start.elapsed().as_secs_f64(),
                )
            }
        };

        let stdout_handle = child.stdout.take().expect("stdout piped");
        let stderr_handle = child.stderr.take().expect("stderr piped");
        let stdout_reader = std::thread::spawn(move || capped_read(stdout_handle));
        let stderr_reader = std::thread::spawn(move || capped_read(stderr_handle));

        let deadline = start + self.timeout;
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) => {
                    if Instant::now() >= deadline {
                        timed_out = true;
                        kill_process_group(&mut child);
                        break child.wait().ok();
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(_) => {
                    kill_process_group(&mut child);
                    break child.wait().ok();
                }
            }
        };

        let stdout = stdout_reader.join().unwrap_or_default();
        let stderr = stderr_reader.join().unwrap_or_default();
        let duration = start.elapsed().as_secs_f64();
        let exit_code = status.and_then(|s| s.code()).unwrap_or(-1);
        let error_type = classify_error(&stderr, exit_code, timed_out);
        let passed = exit_code == 0 && error_type == ErrorType::None;

        // `scratch` drops here, removing the program file on every path.
        ExecutionOutcome {
            passed,
            exit_code,
            stdout,
            stderr,
            error_type,
            duration,
        }
    }
}

#[cfg(unix)]
fn kill_process_group(child: &mut std::process::Child) {
    let pid = child.id() as i32;
    // Negative pid addresses the whole process group.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_process_group(child: &mut std::process::Child) {
    let _ = child.kill();
}

/// Reads a stream to completion, keeping at most `MAX_CAPTURE_BYTES` and
/// draining the remainder so the child never blocks on a full pipe.
fn capped_read(mut stream: impl Read) -> String {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    let mut truncated = false;
    loop {
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                if kept.len() < MAX_CAPTURE_BYTES {
                    let room = MAX_CAPTURE_BYTES - kept.len();
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    if n > room {
                        truncated = true;
                    }
                } else {
                    truncated = true;
                }
            }
            Err(_) => break,
        }
    }
    let mut text = String::from_utf8_lossy(&kept).into_owned();
    if truncated {
        text.push_str("\n... [output truncated at 1 MiB]");
    }
    text
}

const KNOWN_EXCEPTIONS: [(&str, ErrorType); 8] = [
    ("NameError", ErrorType::NameError),
    ("SyntaxError", ErrorType::SyntaxError),
    ("TypeError", ErrorType::TypeError),
    ("AssertionError", ErrorType::AssertionError),
    ("ImportError", ErrorType::ImportError),
    ("ValueError", ErrorType::ValueError),
    ("IndexError", ErrorType::IndexError),
    ("KeyError", ErrorType::KeyError),
];

/// Classifies a failure from captured stderr.
///
/// Timeouts win over everything; a zero exit code means no error. Otherwise
/// the final exception line of the traceback is located (the last line
/// shaped like `SomeException` or `SomeException: message` — chained-cause
/// sections earlier in stderr are thereby ignored) and its token before the
/// first colon is matched exactly against the known set. Anything else,
/// including an empty stderr on a nonzero exit, classifies as `Other`.
pub fn classify_error(stderr: &str, exit_code: i32, timed_out: bool) -> ErrorType {
    if timed_out {
        return ErrorType::Timeout;
    }
    if exit_code == 0 {
        return ErrorType::None;
    }
    let Some(line) = final_exception_line(stderr) else {
        return ErrorType::Other;
    };
    let token = line.split(':').next().unwrap_or("").trim();
    for (name, error_type) in KNOWN_EXCEPTIONS {
        if token == name {
            return error_type;
        }
    }
    ErrorType::Other
}

/// Finds the last stderr line that looks like an exception line: a bare
/// (possibly dotted) identifier, optionally followed by `: message`.
fn final_exception_line(stderr: &str) -> Option<&str> {
    stderr.lines().rev().map(str::trim_end).find(|line| {
        let head = line.split(':').next().unwrap_or("");
        !head.is_empty()
            && !line.starts_with(char::is_whitespace)
            && head
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            && head.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sandbox() -> SandboxExecutor {
        SandboxExecutor::new().with_timeout(Duration::from_secs(5))
    }

    #[test]
    fn passing_code_classifies_none() {
        let out = sandbox().execute("def f(x):\n    return x", "assert f(1) == 1");
        assert!(out.passed, "stderr: {}", out.stderr);
        assert_eq!(out.exit_code, 0);
        assert_eq!(out.error_type, ErrorType::None);
    }

    #[test]
    fn undefined_name_classifies_name_error() {
        let out = sandbox().execute("def f(x):\n    return g(x)", "f(1)");
        assert!(!out.passed);
        assert_eq!(out.error_type, ErrorType::NameError);
    }

    #[test]
    fn infinite_loop_times_out_with_duration_at_least_budget() {
        let executor = SandboxExecutor::new().with_timeout(Duration::from_millis(300));
        let out = executor.execute("", "while True: pass");
        assert_eq!(out.error_type, ErrorType::Timeout);
        assert!(!out.passed);
        assert!(out.duration >= 0.3, "duration {}", out.duration);
    }

    #[test]
    fn timeout_kills_grandchildren() {
        // The child forks a grandchild that would outlive a naive kill.
        let code = "import subprocess, sys\nsubprocess.run([sys.executable, '-c', 'import time; time.sleep(30)'])";
        let executor = SandboxExecutor::new().with_timeout(Duration::from_millis(400));
        let start = Instant::now();
        let out = executor.execute(code, "");
        assert_eq!(out.error_type, ErrorType::Timeout);
        assert!(
            start.elapsed() < Duration::from_secs(5),
            "kill must not wait for the grandchild"
        );
    }

    #[test]
    fn scratch_dirs_are_removed() {
        let root = tempfile::tempdir().unwrap();
        let executor = SandboxExecutor::new()
            .with_timeout(Duration::from_millis(300))
            .with_scratch_root(root.path());
        executor.execute("x = 1", "assert x == 1");
        executor.execute("", "while True: pass"); // timeout path
        let leftovers: Vec<_> = std::fs::read_dir(root.path()).unwrap().collect();
        assert!(leftovers.is_empty(), "leftover scratch dirs: {leftovers:?}");
    }

    #[test]
    fn concurrent_executions_do_not_interfere() {
        // Both candidates write and read a file of the same name; unique
        // scratch working directories keep them apart.
        let executor = sandbox();
        let code_a = "with open('shared.txt', 'w') as f:\n    f.write('A')\nwith open('shared.txt') as f:\n    assert f.read() == 'A'";
        let code_b = code_a.replace('A', "B");
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..8)
                .map(|i| {
                    let executor = &executor;
                    let code = if i % 2 == 0 { code_a.to_string() } else { code_b.clone() };
                    scope.spawn(move || executor.execute(&code, ""))
                })
                .collect();
            for handle in handles {
                let out = handle.join().unwrap();
                assert!(out.passed, "stderr: {}", out.stderr);
            }
        });
    }

    #[test]
    fn missing_interpreter_is_a_harness_error() {
        let executor = SandboxExecutor::new().with_interpreter("/nonexistent/python-binary");
        let out = executor.execute("x = 1", "");
        assert_eq!(out.error_type, ErrorType::HarnessError);
        assert!(!out.passed);
    }

    #[test]
    fn print_bomb_output_is_capped() {
        let out = sandbox().execute("print('x' * (4 * 1024 * 1024))", "");
        assert!(out.stdout.len() <= MAX_CAPTURE_BYTES + 64);
        assert!(out.stdout.contains("truncated"));
    }

    #[test]
    fn classify_token_match_before_colon() {
        assert_eq!(classify_error("AssertionError", 1, false), ErrorType::AssertionError);
        assert_eq!(
            classify_error("ZeroDivisionError: division by zero", 1, false),
            ErrorType::Other
        );
        assert_eq!(classify_error("", 0, false), ErrorType::None);
        assert_eq!(classify_error("", 1, false), ErrorType::Other);
        assert_eq!(classify_error("anything", 1, true), ErrorType::Timeout);
    }

    #[test]
    fn classify_ignores_chained_cause_sections() {
        let stderr = "Traceback (most recent call last):\n  File \"x.py\", line 2, in <module>\nValueError: bad\n\nDuring handling of the above exception, another exception occurred:\n\nTraceback (most recent call last):\n  File \"x.py\", line 4, in <module>\nKeyError: 'k'\n";
        assert_eq!(classify_error(stderr, 1, false), ErrorType::KeyError);
    }
}
