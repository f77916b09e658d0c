use std::path::PathBuf;
use std::process::ExitCode;

use carleman_cli::config::{Command, RunConfig};
use carleman_cli::run::{self, Overrides};
use carleman_cli::{output, selftest, CliError};
use clap::Parser;

/// Steady sliding contact with heterogeneous friction.
#[derive(Parser, Debug)]
#[command(name = "carleman", version)]
struct Args {
    /// Command to run; defaults to the `command` key of the config.
    #[arg(value_enum)]
    command: Option<Command>,
    /// TOML problem description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of grid nodes, overrides `grid.n`.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Recorded in the metadata; the solvers are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(args: Args) -> Result<(), CliError> {
    if args.command == Some(Command::Selftest) {
        let checks = selftest::run_checks();
        print!("{}", selftest::render(&checks));
        let failed = checks.iter().filter(|c| !c.passed()).count();
        return if failed == 0 { Ok(()) } else { Err(CliError::Selftest(failed)) };
    }
    let path = args
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    let cmd = cfg.resolve_command(args.command)?;
    Overrides {
        out: args.out,
        grid_n: args.grid_n,
        seed: args.seed,
    }
    .apply(&mut cfg);
    if cmd == Command::Selftest {
        return execute(Args {
            command: Some(Command::Selftest),
            config: None,
            out: None,
            grid_n: None,
            seed: None,
        });
    }
    let bundle = run::run(cmd, &cfg, args.seed)?;
    for p in output::emit(&bundle, &cfg.output.dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            eprintln!("{}", CliError::Config(e.to_string().trim().to_string()).to_json());
            return ExitCode::from(carleman_cli::EXIT_CONFIG as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
