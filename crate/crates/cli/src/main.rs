use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use pctrain_cli::{run, Flags, RunError};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> ExitCode {
    let result = Flags::parse()
        .into_spec()
        .map_err(RunError::from)
        .and_then(|spec| run(&spec));
    match result {
        Ok(outcome) => {
            let mut stdout = io::stdout().lock();
            for (key, value) in &outcome.summary {
                let _ = writeln!(stdout, "{key}={value}");
            }
            let _ = writeln!(
                stdout,
                "outputs written to {}",
                outcome.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
