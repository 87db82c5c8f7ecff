use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use quasirigid_cli::{init_threads, run, CliError, RunConfig};

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let config = match RunConfig::try_parse() {
        Ok(config) => config,
        Err(e) => {
            let _ = e.print();
            // Usage errors are bad input; exit code 2 is reserved for geometry.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = init_threads().and_then(|()| {
        let output = run(&config)?;
        match &config.out {
            Some(path) => write(path, &output.primary)?,
            None => {
                let mut stdout = io::stdout().lock();
                // A closed pipe (`| head`) is not an error worth reporting.
                if let Err(e) = stdout.write_all(output.primary.as_bytes()).and_then(|()| stdout.flush()) {
                    if e.kind() != io::ErrorKind::BrokenPipe {
                        return Err(CliError::Input(format!("stdout: {e}")));
                    }
                }
            }
        }
        if let (Some(path), Some(svg)) = (&config.svg, &output.svg) {
            write(path, svg)?;
        }
        for w in &output.warnings {
            eprintln!("warning: {w}");
        }
        match output.failures.first() {
            None => Ok(()),
            Some(_) => Err(CliError::CheckFailed(output.failures.join("; "))),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
