use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vlearn::commands;
use vlearn::config::{merge, read_settings_file, Settings};
use vlearn::error::CliError;

#[derive(Parser)]
#[command(name = "vlearn", version, about = "Estimate and evaluate infinite-horizon treatment policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML file of settings (or a run manifest); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a logged dataset from a simulation environment.
    Simulate(Common),
    /// Estimate a policy (V-learning or GGQ) from a dataset.
    Fit(Common),
    /// Roll out a stored policy, estimate its value from data, or report
    /// its action probabilities at a state.
    Evaluate(Common),
    /// Run online estimation with periodic policy updates.
    Online(Common),
    /// Rerun one of the simulation tables.
    Reproduce(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common, f): (&str, Common, fn(Settings) -> Result<_, CliError>) = match cli.command {
        Command::Simulate(c) => ("simulate", c, commands::simulate),
        Command::Fit(c) => ("fit", c, commands::fit),
        Command::Evaluate(c) => ("evaluate", c, commands::evaluate),
        Command::Online(c) => ("online", c, commands::online),
        Command::Reproduce(c) => ("reproduce", c, commands::reproduce),
    };
    let file = common.config.as_deref().map(read_settings_file).transpose()?;
    let settings = merge(file, &common.settings)?;
    let manifest = f(settings)?;
    log::info!("{name} finished in {:.2}s", manifest.wall_clock_seconds);
    for o in &manifest.outputs {
        println!("{}", o.path);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
