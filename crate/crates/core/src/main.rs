use clap::error::ErrorKind;
use clap::Parser;
use std::io::Write;
use std::process::ExitCode;
use ugrec::cli::{exit_code, run, Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let out = match run(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let written = match (&cli.out, &cli.command) {
        (_, Command::Tables { all: true, .. }) | (None, _) => std::io::stdout().write_all(out.as_bytes()),
        (Some(p), _) => std::fs::write(p, out.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
