use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nes_sim::commands::{self, GlobalOpts};

#[derive(Parser)]
#[command(name = "nes-sim", version, about = "Nash equilibrium seeking simulator")]
struct Cli {
    /// Override the config's integration step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Override the config's horizon.
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Seed for randomized utilities.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an experiment config.
    Run { config: PathBuf },
    /// Print gain lower bounds for a config.
    Tune { config: PathBuf },
    /// Print the exact equilibrium of the config's game.
    Oracle { config: PathBuf },
    /// Rerun a built-in figure preset.
    Replicate {
        figure: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = GlobalOpts {
        dt: cli.dt,
        t_end: cli.t_end,
        seed: cli.seed,
    };
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let code = match &cli.command {
        Command::Run { config } => commands::cmd_run(config, &opts, &mut out, &mut err),
        Command::Tune { config } => commands::cmd_tune(config, &opts, &mut out, &mut err),
        Command::Oracle { config } => commands::cmd_oracle(config, &opts, &mut out, &mut err),
        Command::Replicate { figure, out: dir } => commands::cmd_replicate(figure, dir, &opts, &mut out, &mut err),
    };
    ExitCode::from(code as u8)
}
