use std::io::Write;

use clap::Parser;
use cvqnn_cli::cli::{dispatch, Cli};
use cvqnn_cli::CliError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => fail(CliError::Config(e.to_string().trim_end().to_string())),
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            // a closed pipe on stdout is not a failure of the run
            let _ = writeln!(
                std::io::stdout().lock(),
                "{}",
                serde_json::to_string_pretty(&summary).expect("JSON value")
            );
        }
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ! {
    eprintln!("{}", e.to_json());
    std::process::exit(e.exit_code());
}
