mod commands;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Training and data tools for critique reinforcement learning on the toy
/// policy.
#[derive(Parser, Debug)]
#[command(name = "crl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the toy policy with the hybrid RL/CRL objective.
    Train(TrainArgs),
    /// Drop over-long test cases and subsample the rest.
    Filter(FilterArgs),
    /// Run candidate solutions and label them as critique examples.
    MakeCritiques(MakeCritiquesArgs),
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Pick one candidate per problem from its critiques.
    Select {
        /// Candidate solutions, one JSON object per line.
        #[arg(long)]
        candidates: PathBuf,
        /// Critique texts, one JSON object per line.
        #[arg(long)]
        critiques: PathBuf,
    },
    /// Write a synthetic bit-copying corpus and its critiques.
    GenSynthetic(GenArgs),
    /// Print a training config preset.
    Config {
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    LargeScale,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// TOML training config (see `crl config`).
    #[arg(long)]
    config: PathBuf,
    /// Problem corpus whose prompts are bit strings. Without it a synthetic
    /// corpus is generated from the config seed.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Critique corpus matched to problems by question.
    #[arg(long, requires = "corpus")]
    critique: Option<PathBuf>,
    /// Directory for metrics, checkpoints and the run summary.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    synthetic_problems: usize,
    #[arg(long, default_value_t = 16)]
    synthetic_len: usize,
}

#[derive(clap::Args, Debug)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    max_tokens: usize,
    #[arg(long, default_value_t = 30)]
    max_cases: usize,
    #[arg(long)]
    seed: u64,
    /// Count characters instead of whitespace-separated tokens.
    #[arg(long)]
    chars: bool,
}

#[derive(clap::Args, Debug)]
struct MakeCritiquesArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Lines of `{"problem_id", "solution"}`, optionally with `"runner"`.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    /// Runner used when a candidate names none.
    #[arg(long, default_value = "python3")]
    runner: String,
    /// TOML file of `[[runner]]` entries replacing the built-in runners.
    #[arg(long)]
    runner_config: Option<PathBuf>,
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(clap::Args, Debug)]
struct GenArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    critiques: PathBuf,
    #[arg(long, default_value_t = 500)]
    problems: usize,
    #[arg(long, default_value_t = 16)]
    len: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Filter(a) => commands::filter(a),
        Command::MakeCritiques(a) => commands::make_critiques(a),
        Command::Stats { input } => commands::stats(&input),
        Command::Select {
            candidates,
            critiques,
        } => commands::select(&candidates, &critiques),
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
        Command::Config { preset } => commands::print_config(preset),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
