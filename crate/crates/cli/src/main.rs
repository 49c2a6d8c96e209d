use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relattn_cli::{parse_config, parse_flags, run, Command, Status, KEYS};

#[derive(Parser)]
#[command(name = "relattn", version, about = "Relation extraction with dependency- and entity-enriched attention")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate corpora, write pairified copies and statistics
    Prepare(Opts),
    /// Train one model, or several seeds with `--runs`
    Train(Opts),
    /// Score one checkpoint or the vote of a comma-separated list
    Eval(Opts),
    /// Write predictions without scoring
    Predict(Opts),
    /// Robustness bins, local feature tables and attention heatmaps
    Analyze(Opts),
    /// Finite-difference check of a random tiny model
    Gradcheck(Opts),
}

#[derive(Args)]
#[command(after_help = keys_help())]
struct Opts {
    /// Flat `key = value` file; flags override it
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `--key value` overrides for any config key
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn keys_help() -> String {
    format!("Config keys: {}", KEYS.join(", "))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Prepare(o) => (Command::Prepare, o),
        Cmd::Train(o) => (Command::Train, o),
        Cmd::Eval(o) => (Command::Eval, o),
        Cmd::Predict(o) => (Command::Predict, o),
        Cmd::Analyze(o) => (Command::Analyze, o),
        Cmd::Gradcheck(o) => (Command::Gradcheck, o),
    };
    let result = parse_flags(&opts.overrides)
        .and_then(|flags| parse_config(command, opts.config.as_deref(), &flags))
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
