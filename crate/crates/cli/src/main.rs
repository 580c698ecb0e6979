use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psdl_core::io::{execute, exit_code, Command, ConfigFile, RunOptions};

/// Processor-sharing queues with soft deadlines: simulation, limit
/// profiles and heavy-traffic sweeps.
#[derive(Parser, Debug)]
#[command(name = "psdl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, env = "PSDL_THREADS", default_value_t = 0)]
    threads: usize,

    /// Replaces the seed (or seed base) in the config.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one scenario; writes departures, path and snapshot CSVs.
    Simulate(ConfigArg),
    /// Evaluate a lifted measure on a quadrant grid.
    Lift(ConfigArg),
    /// Evaluate a limiting profile on a list of y values.
    Profiles(ConfigArg),
    /// Simulate reflected Brownian motion and report its stationary law.
    Rbm(ConfigArg),
    /// Run a heavy-traffic sweep and write the collapse report.
    Sweep(ConfigArg),
}

#[derive(clap::Args, Debug)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let (cmd, arg) = match &cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Lift(a) => (Command::Lift, a),
        Cmd::Profiles(a) => (Command::Profiles, a),
        Cmd::Rbm(a) => (Command::Rbm, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let opts = RunOptions {
        out: cli.out.clone(),
        threads: cli.threads,
        seed_override: cli.seed_override,
    };
    let result = ConfigFile::load(&arg.config).and_then(|cfg| execute(cmd, cfg, &opts));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("psdl: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
