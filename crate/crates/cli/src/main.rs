use std::process::ExitCode;

use clap::Parser;
use weakfield::Error;
use weakfield_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match err.downcast_ref::<Error>() {
                Some(Error::Config(items)) => {
                    eprintln!("error: invalid configuration");
                    for item in items {
                        eprintln!("  - {item}");
                    }
                }
                _ => {
                    eprintln!("error: {err}");
                    for cause in err.chain().skip(1) {
                        eprintln!("  caused by: {cause}");
                    }
                }
            }
            ExitCode::FAILURE
        }
    }
}
