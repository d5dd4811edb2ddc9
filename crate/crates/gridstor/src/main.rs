use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridstor::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "gridstor", version, about = "Storage sizing and placement on unbalanced LV feeders")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for synthetic profiles; overrides `profiles.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the unit-count sweep.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the feeder, profiles and study settings.
    Validate(Common),
    /// Losses, hosting capacity and unbalance without storage.
    Baseline(Common),
    /// Optimal placement and sizing for the configured unit count.
    Size(Common),
    /// Distributed storage study over the configured unit counts.
    Sweep(Common),
    /// Baseline, sizing and sweep merged into one report bundle.
    Report(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let rec = serde_json::json!({ "error": "config", "exit_code": 2, "message": msg.trim() });
            eprintln!("{rec}");
            return ExitCode::from(2);
        }
    };
    let (cmd, c) = match cli.command {
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Baseline(c) => (Command::Baseline, c),
        Cmd::Size(c) => (Command::Size, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    let opts = RunOptions { out: c.out, seed: c.seed, jobs: c.jobs.map(|j| j as usize) };
    match run(cmd, &c.config, &opts) {
        Ok(files) => {
            if cmd == Command::Validate {
                println!("ok");
            }
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
