use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddeid_cli::commands;
use ddeid_cli::{CliError, Config, FailureKind};

#[derive(Parser)]
#[command(name = "ddeid", version, about = "Identify parameters, delay and history of delay differential equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding `[noise] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the clean dataset and one noisy copy per noise level.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a dataset from the config's initial guess.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV with header t,x0,...
        #[arg(long)]
        data: PathBuf,
    },
    /// Run all trials at every noise level and summarise them.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare adjoint gradients with finite differences at the initial guess.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn load(common: &Common) -> Result<Config, CliError> {
    let mut cfg = Config::load(&common.config).map_err(|e| CliError::new(FailureKind::Config, e))?;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            for path in commands::simulate(&load(&common)?)? {
                say!("wrote {}", path.display());
            }
        }
        Command::Fit { common, data } => {
            let cfg = load(&common)?;
            let ds = commands::load_data(&data)?;
            let (r, out) = commands::fit(&cfg, &ds)?;
            say!(
                "{}: {} epochs, final loss {}, tau {}",
                r.stop_reason.as_str(),
                r.loss_history.len(),
                r.final_loss.map_or("NA".into(), |l| l.to_string()),
                r.tau
            );
            say!("wrote {}, {}, {}", out.result.display(), out.trajectory.display(), out.loss.display());
        }
        Command::Experiment { common, jobs } => {
            if jobs == Some(0) {
                return Err(CliError::new(FailureKind::Config, anyhow::anyhow!("--jobs must be at least 1")));
            }
            for path in commands::experiment(&load(&common)?, jobs)? {
                say!("wrote {}", path.display());
            }
        }
        Command::Gradcheck { common } => {
            let cfg = load(&common)?;
            let report = commands::gradcheck(&cfg)?;
            say!("model {}", cfg.model.name);
            say!("{report}");
            for (block, err) in commands::block_maxima(&report) {
                say!("max rel err {block}: {err:.3e}");
            }
            if !report.pass() {
                let n = report.failures().count();
                return Err(CliError::new(
                    FailureKind::Numerical,
                    anyhow::anyhow!("gradient check failed for {n} component(s)"),
                ));
            }
            say!("PASS");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(FailureKind::Config.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
