use std::io;
use std::process::ExitCode;

use clap::Parser;
use gsa_cli::{run, Cli};

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let kind = if let Some(io_err) = c.downcast_ref::<io::Error>() {
            Some(io_err.kind())
        } else if let Some(json) = c.downcast_ref::<serde_json::Error>() {
            json.io_error_kind()
        } else if let Some(csv_err) = c.downcast_ref::<csv::Error>() {
            match csv_err.kind() {
                csv::ErrorKind::Io(inner) => Some(inner.kind()),
                _ => None,
            }
        } else {
            None
        };
        kind == Some(io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        // a closed downstream pipe (`| head`) is not a failure
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
