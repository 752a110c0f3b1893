//! `skillforge`: run, inspect and export skill-library proving runs.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | runtime or verification failure, missing library snapshot |
//! | 2 | usage or configuration error, missing input file |
//! | 3 | model or verifier backend unreachable |

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use skillforge::library::StoreKind;
use skillforge::orchestrator::Mode;

#[derive(Debug, Parser)]
#[command(name = "skillforge", version, about = "Grow a verified lemma library while proving problems")]
struct Cli {
    /// Print machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(short, long, default_value = "skillforge.toml")]
    config: PathBuf,
    /// Overrides `paths.run_dir`.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Ignore any checkpoint and library snapshot in the run directory.
    #[arg(long)]
    fresh: bool,
    /// Stop after this many ticks in total (0 = no limit).
    #[arg(long)]
    max_ticks: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TreeFormat {
    /// Indented outline.
    Tree,
    /// Graphviz DOT.
    Graph,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run (or resume) the prover and evolver workers until every problem is settled.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = clap::value_parser!(Mode))]
        mode: Option<Mode>,
    },
    /// `run --mode replay`: serve every model call from the cassette.
    Replay {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Summarize a run directory's logs and library.
    Stats {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print only the attempt/solved table.
        #[arg(long)]
        table: bool,
    },
    /// Export the skill genealogy forest.
    ExportTree {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "tree")]
        format: TreeFormat,
    },
    /// Nearest neighbours of a text in one of the library stores.
    Query {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// lemma, request or problem.
        #[arg(value_parser = clap::value_parser!(StoreKind))]
        store: StoreKind,
        text: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
    /// Check a theory file with the configured verifier (a permissive mock without --config).
    VerifyFile {
        path: PathBuf,
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Add or update problems in the run directory's library snapshot.
    Ingest {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Newline-delimited JSON problem records.
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = cmd::Output { json: cli.json };
    let result = match cli.command {
        Command::Run { run, mode } => cmd::run(&out, run, mode),
        Command::Replay { run } => cmd::run(&out, run, Some(Mode::Replay)),
        Command::Stats { cfg, table } => cmd::stats(&out, cfg, table),
        Command::ExportTree { cfg, format } => cmd::export_tree(&out, cfg, format),
        Command::Query { cfg, store, text, k } => cmd::query(&out, cfg, store, &text, k),
        Command::VerifyFile { path, config } => cmd::verify_file(&out, &path, config.as_deref()),
        Command::Ingest { cfg, file } => cmd::ingest(&out, cfg, &file),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
