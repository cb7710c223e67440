use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dotparity_cli::commands::{
    cmd_detune, cmd_holemix, cmd_run, cmd_spatial, cmd_sweep_eta, cmd_traj, cmd_verify,
};
use dotparity_cli::config::{parse_config, RunConfig};
use dotparity_cli::output::OutputFormat;
use dotparity_cli::{with_thread_cap, CliError};

/// Coupled-quantum-dot spin-parity measurement simulator.
#[derive(Parser)]
#[command(name = "dotparity", version, about)]
struct Cli {
    /// Path to a `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Shot count override.
    #[arg(long, global = true)]
    shots: Option<usize>,

    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full parity-measurement protocol shot by shot.
    Run,
    /// Dump raw monitored-relaxation trajectories.
    Traj,
    /// Average even-projection fidelity over detector efficiency.
    SweepEta {
        /// Repetition counts, comma separated.
        #[arg(long = "r", value_delimiter = ',', default_value = "1,2,3,5")]
        r_list: Vec<usize>,
        /// Efficiency grid, comma separated.
        #[arg(
            long = "eta",
            value_delimiter = ',',
            default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
        )]
        eta_grid: Vec<f64>,
        /// Quadrature resolution per axis.
        #[arg(long, default_value_t = 64)]
        points: usize,
    },
    /// Photon-mode overlap versus dot separation.
    Spatial {
        #[arg(long = "delta-r-nm", value_delimiter = ',', default_value = "5")]
        delta_r_nm: Vec<f64>,
        #[arg(long = "omega0-mev", default_value_t = 2000.0)]
        omega0_mev: f64,
    },
    /// Excitation-pulse populations under valence-band mixing.
    Holemix {
        #[arg(long = "eps", value_delimiter = ',', default_value = "0,0.01,0.02,0.05")]
        eps_list: Vec<f64>,
        /// Laser detuning from the exciton line.
        #[arg(long = "delta-mev", default_value_t = 0.0)]
        delta_mev: f64,
        #[arg(long = "grid-points", default_value_t = 65)]
        grid_points: usize,
    },
    /// Maximum exciton transfer and accumulated phase versus detuning.
    Detune {
        /// Per-dot detunings ±δ, comma separated (meV).
        #[arg(
            long = "delta-mev",
            value_delimiter = ',',
            default_value = "0,0.02,0.04,0.06,0.08,0.1"
        )]
        delta_grid_mev: Vec<f64>,
    },
    /// Verification-pipeline odd probability versus coherence factor.
    Verify {
        #[arg(long = "alpha", value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        alpha_grid: Vec<f64>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(shots) = cli.shots {
        if shots == 0 {
            return Err(CliError::Config("shots must be at least 1".into()));
        }
        cfg.shots = shots;
    }
    Ok(cfg)
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("DOTPARITY_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| CliError::Config(format!("DOTPARITY_THREADS={v:?} is not a count")))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    let format: OutputFormat = cli.format.into();
    let cfg = load_config(cli)?;
    let threads = threads_from_env()?;
    with_thread_cap(threads, || match &cli.command {
        Command::Run => cmd_run(&cfg, format),
        Command::Traj => cmd_traj(&cfg, format),
        Command::SweepEta {
            r_list,
            eta_grid,
            points,
        } => cmd_sweep_eta(r_list, eta_grid, *points, format),
        Command::Spatial {
            delta_r_nm,
            omega0_mev,
        } => cmd_spatial(delta_r_nm, *omega0_mev, format),
        Command::Holemix {
            eps_list,
            delta_mev,
            grid_points,
        } => cmd_holemix(eps_list, &cfg.params, *delta_mev, *grid_points, format),
        Command::Detune { delta_grid_mev } => cmd_detune(delta_grid_mev, &cfg.params, format),
        Command::Verify { alpha_grid } => cmd_verify(alpha_grid, format),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(rendered) => {
            let write_result = match &cli.out {
                Some(path) => fs::write(path, rendered.as_bytes()),
                None => std::io::stdout().write_all(rendered.as_bytes()),
            };
            match write_result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("io error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
