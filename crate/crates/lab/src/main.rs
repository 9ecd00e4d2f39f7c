use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cusplab_cli::{cache_command, cache_dir, CacheCommand, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "lab", version, about = "Spectral experiments on cusped domains and the cusp manifold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML configuration.
    Run { config: PathBuf },
    /// Inspect or maintain the eigenpair cache (location: $CUSPLAB_CACHE_DIR).
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Print the built-in configuration of an experiment kind as TOML.
    Init {
        kind: String,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Run the inequality property suite with built-in defaults.
    Check {
        #[arg(long, default_value = "lab-check")]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Status,
    Clear,
    Verify,
}

fn finish(outcome: Result<cusplab_cli::RunOutcome, cusplab_cli::config::ConfigError>) -> i32 {
    match outcome {
        Ok(o) => {
            let summary = std::fs::read_to_string(o.output_dir.join(cusplab_cli::manifest::SUMMARY_FILE)).unwrap_or_default();
            print!("{summary}");
            println!("outputs: {}", o.output_dir.display());
            o.exit_code
        }
        Err(e) => {
            eprintln!("configuration error: {e}");
            EXIT_USAGE
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let cache = cache_dir();
    let code = match cli.command {
        Command::Run { config } => finish(cusplab_cli::run_config_file(&config, &cache)),
        Command::Init { kind, output } => match cusplab_cli::default_config_text(&kind, output) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("{e}");
                EXIT_USAGE
            }
        },
        Command::Check { output } => finish(cusplab_cli::check(&output, &cache)),
        Command::Cache { action } => {
            let cmd = match action {
                CacheAction::Status => CacheCommand::Status,
                CacheAction::Clear => CacheCommand::Clear,
                CacheAction::Verify => CacheCommand::Verify,
            };
            let (report, code) = cache_command(cmd, &cache);
            print!("{report}");
            code
        }
    };
    ExitCode::from(code as u8)
}
