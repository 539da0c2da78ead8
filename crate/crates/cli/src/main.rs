use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sturm_cli::commands::{self, Context};
use sturm_cli::config::RunConfig;
use sturm_cli::CliError;

/// Sturmian one-electron cluster solver.
#[derive(Parser)]
#[command(name = "sturm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy levels in the scan window.
    Spectrum(Common),
    /// Normalized wave function of one level along a line.
    Wavefunction(Common),
    /// Four lowest levels across inner separations of a four-ion chain.
    Scan(Common),
    /// Momentum-space levels against the finite-difference reference.
    Compare(Common),
    /// Finite-difference reference levels alone.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set basis.shells=M14`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Spectrum(common)
    | Command::Wavefunction(common)
    | Command::Scan(common)
    | Command::Compare(common)
    | Command::Oracle(common)) = &cli.command;
    let cfg = RunConfig::load(&common.config, &common.overrides)?;
    let mut out: Box<dyn Write> = match &common.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let ctx = Context::new(&cfg);
    let result = match cli.command {
        Command::Spectrum(_) => commands::spectrum(&cfg, &ctx, &mut out),
        Command::Wavefunction(_) => commands::wavefunction(&cfg, &ctx, &mut out),
        Command::Scan(_) => commands::scan(&cfg, &ctx, &mut out),
        Command::Compare(_) => commands::compare(&cfg, &ctx, &mut out, &mut io::stderr()),
        Command::Oracle(_) => commands::oracle(&cfg, &ctx, &mut out),
    };
    ctx.finish();
    out.flush()?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sturm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
