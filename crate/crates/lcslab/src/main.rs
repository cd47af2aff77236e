use clap::Parser;
use serde_json::json;

use lcslab::cli::{execute, Cli, Outcome};
use lcslab::config::RunError;

/// Exit code when a suite ran to completion but some criterion failed.
const SUITE_FAILED: i32 = 3;

fn configure_threads() -> Result<(), RunError> {
    let Ok(s) = std::env::var("LCSLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = s
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| RunError::Usage(format!("LCSLAB_THREADS={s} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| RunError::Io(e.to_string()))
}

fn main() {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| execute(&cli.command));
    match result {
        Ok(Outcome::Done) => {}
        Ok(Outcome::Suite(r)) => {
            for c in &r.criteria {
                eprintln!("{}", c.line());
            }
            if !r.passed() {
                std::process::exit(SUITE_FAILED);
            }
        }
        Err(e) => {
            let diag = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{diag}");
            std::process::exit(e.exit_code());
        }
    }
}
