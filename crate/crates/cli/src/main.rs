use std::process::ExitCode;

use clap::Parser;
use disinr_cli::app::{run, Cli};
use disinr_cli::exit_code;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("DISINR_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot size the thread pool: {e}");
                    return ExitCode::from(2);
                }
            }
            _ => {
                eprintln!("error: DISINR_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
