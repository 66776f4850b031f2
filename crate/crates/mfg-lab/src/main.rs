use clap::{Parser, Subcommand};
use mfg_lab::cli::{self, CliError, RunConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mfg-lab",
    about = "Mean field game solvers on the torus with vanishing-viscosity rate experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem instance and write its summary
    Run {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Run a ν sweep with rate fits against the predicted exponents
    Sweep {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        outdir: Option<PathBuf>,
        /// Also emit the log-log SVG plot
        #[arg(long)]
        svg: bool,
    },
    /// Run the invariant suites (all of them by default)
    Check {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        suite: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// List built-in presets with their predicted exponents
    Presets,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Run {
            config,
            preset,
            outdir,
        } => {
            let mut cfg = load_config(&config)?;
            if preset.is_some() {
                cfg.preset = preset;
            }
            if let Some(dir) = outdir {
                cfg.outdir = dir;
            }
            cli::cmd_run(&cfg, &mut stdout)
        }
        Command::Sweep {
            config,
            preset,
            outdir,
            svg,
        } => {
            let mut cfg = load_config(&config)?;
            if preset.is_some() {
                cfg.preset = preset;
            }
            if let Some(dir) = outdir {
                cfg.outdir = dir;
            }
            if svg {
                cfg.emit.svg = true;
            }
            cli::cmd_sweep(&cfg, &mut stdout)
        }
        Command::Check {
            config,
            suite,
            seed,
            outdir,
        } => {
            let mut cfg = load_config(&config)?;
            if !suite.is_empty() {
                cfg.check.suites = suite;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = outdir {
                cfg.outdir = dir;
            }
            cli::cmd_check(&cfg, &mut stdout)
        }
        Command::Presets => cli::cmd_presets(&mut stdout),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        let record = err.record();
        eprintln!("{record}");
        std::process::exit(err.exit_code());
    }
}
