//! Execute snippets in the sandbox and show the error classification,
//! including a forced timeout (requires `python3` on the host).
//!
//! ```bash
//! cargo run --example sandbox_run
//! ```

use std::time::Duration;

use evopipe::sandbox::{CodeExecutor, SandboxExecutor};

fn main() {
    let executor = SandboxExecutor::new().with_timeout(Duration::from_secs(5));
    if !executor.is_available() {
        eprintln!("python3 not found; set EVOPIPE_PYTHON to your interpreter");
        std::process::exit(2);
    }

    let snippets: Vec<(&str, &str, &str)> = vec![
        ("passing", "def f(x):\n    return x + 1", "assert f(1) == 2"),
        ("name error", "def f(x):\n    return missing", "f(1)"),
        ("assertion", "def f(x):\n    return 0", "assert f(1) == 2"),
        ("type error", "x = 1 + 'a'", ""),
        ("key error", "x = {}['absent']", ""),
        ("unlisted error", "x = 1 / 0", ""),
    ];

    println!("{:<16} {:>7} {:>6} {:>9}  last stderr line", "snippet", "passed", "exit", "class");
    for (name, code, tests) in snippets {
        let out = executor.execute(code, tests);
        println!(
            "{name:<16} {:>7} {:>6} {:>9}  {}",
            out.passed,
            out.exit_code,
            out.error_type.to_string(),
            out.stderr.lines().last().unwrap_or("")
        );
    }

    let quick = SandboxExecutor::new().with_timeout(Duration::from_millis(500));
    let out = quick.execute("", "while True: pass");
    println!(
        "{:<16} {:>7} {:>6} {:>9}  killed after {:.2}s",
        "infinite loop", out.passed, out.exit_code, out.error_type.to_string(), out.duration
    );
}
