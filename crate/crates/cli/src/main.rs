mod args;
mod commands;
mod fail;
mod files;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use commands::Status;
use fail::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("{e}");
        return ExitCode::from(e.exit_code());
    }
    match commands::run(cli.command) {
        Ok(Status::Converged) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning[convergence]: solver stopped before reaching the KKT tolerance");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let from_env = match std::env::var("SSNAL_NUM_THREADS") {
        Ok(v) => Some(
            v.parse::<usize>()
                .map_err(|_| CliError::input(format!("SSNAL_NUM_THREADS is not a count: {v:?}")))?,
        ),
        Err(_) => None,
    };
    if let Some(n) = flag.or(from_env) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    }
    Ok(())
}
