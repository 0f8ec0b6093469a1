use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use curricula::curriculum::Direction;
use curricula_cli::{cmd_bench, cmd_compare, cmd_prepare, cmd_report, cmd_run, CliError, Global};

/// Curriculum training over synthetic and real action-recognition pools.
#[derive(Parser)]
#[command(name = "curricula", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config; for `bench`, `compare` and
    /// `report` this is the directory written).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing output directories.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    #[value(name = "s_to_r")]
    SToR,
    #[value(name = "r_to_s")]
    RToS,
}

#[derive(Subcommand)]
enum Command {
    /// Window, filter and balance the three domains into pool files.
    Prepare,
    /// Generate the synthetic benchmark bundle.
    Bench {
        /// Benchmark spec JSON; the committed spec if omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train one strategy, or every strategy listed in the config.
    Run {
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long, value_enum)]
        direction: Option<Dir>,
    },
    /// Score run directories on the target pool and write a report.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Label of the baseline run, e.g. `naive`.
        #[arg(long, default_value = "naive")]
        base: String,
        /// Setting name shown in the report.
        #[arg(long)]
        setting: Option<String>,
    },
    /// Render tables and plots from a report.json or accuracy CSV.
    Report { input: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CURRICULA_LOG", "warn")).init();
    let cli = Cli::parse();
    let global = Global {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        force: cli.force,
    };
    match dispatch(&global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

fn dispatch(global: &Global, command: Command) -> Result<(), CliError> {
    match command {
        Command::Prepare => {
            let (outcome, names) = cmd_prepare(global)?;
            print!("{}", outcome.render(&names));
        }
        Command::Bench { spec } => {
            let dir = cmd_bench(global, spec.as_deref())?;
            println!("wrote {}", dir.display());
        }
        Command::Run { strategy, direction } => {
            let direction = direction.map(|d| match d {
                Dir::SToR => Direction::SynToReal,
                Dir::RToS => Direction::RealToSyn,
            });
            for dir in cmd_run(global, strategy.as_deref(), direction)? {
                println!("wrote {}", dir.display());
            }
        }
        Command::Compare { runs, base, setting } => {
            let dir = cmd_compare(global, &runs, &base, setting.as_deref())?;
            print!("{}", std::fs::read_to_string(dir.join("report.md")).unwrap_or_default());
        }
        Command::Report { input } => {
            let dir = cmd_report(global, &input)?;
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}
