//! `bbpc`: periodic bang-bang designs for the reactor model from the
//! command line.

mod commands;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "bbpc", version, about = "Periodic bang-bang control design for a CSTR")]
pub struct Cli {
    /// Preset name (`hydrolysis`) or path to a `key = value` model file.
    #[arg(long, global = true, default_value = "hydrolysis")]
    pub model: String,

    /// Print run metadata (version, arguments, time) to stderr.
    #[arg(long, global = true)]
    pub stamp: bool,

    /// Ten times the default integration step, relaxed error guard.
    #[arg(long, global = true)]
    pub coarse: bool,

    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Number of windows (2, 3 or 4).
    #[arg(long = "N", value_name = "N", default_value_t = 2)]
    pub n: usize,

    #[arg(long)]
    pub alpha2: Option<f64>,

    #[arg(long)]
    pub alpha4: Option<f64>,

    /// Initial guess `x1,x2` for shooting.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub guess: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parameters, discriminant, linearization and extreme equilibria.
    ModelInfo {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Solve one periodic orbit and report its cost.
    Design {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        tau: f64,
        /// Also write the orbit as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Two-window orbits for tau = 0.1..1.0 next to the reference table.
    Table1 {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Continuation over a period list, or a four-window fraction grid.
    /// Prints a JSON array.
    Sweep {
        #[command(flatten)]
        design: DesignArgs,
        /// Comma-separated periods.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tau: Vec<String>,
        /// `k` grid points per fraction, `alpha = j / (2 (k + 1))`; needs `--N 4` and one period.
        #[arg(long)]
        alpha_grid: Option<usize>,
    },
    /// Orbit samples as CSV: `t,x1,x2,u1,u2`.
    Trajectory {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        tau: f64,
    },
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut s = io::stdout().lock();
            match s.write_all(text.as_bytes()).and_then(|_| s.flush()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Config(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("BBPC_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("BBPC_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn stamp() {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "tool": "bbpc",
        "version": env!("CARGO_PKG_VERSION"),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "unix_time": secs,
    });
    eprintln!("{meta}");
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    if cli.stamp {
        stamp();
    }
    let model = commands::load_model(&cli.model)?;
    let text = match &cli.command {
        Command::ModelInfo { format } => commands::model_info(&cli.model, &model, *format)?,
        Command::Design { design, tau, csv, format } => {
            let (text, orbit) = commands::design(&model, design, *tau, cli.coarse, *format)?;
            if let Some(p) = csv {
                fs::write(p, orbit.trajectory.to_csv())
                    .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?;
            }
            text
        }
        Command::Table1 { format } => commands::table1(&model, cli.coarse, *format)?,
        Command::Sweep { design, tau, alpha_grid } => {
            let (text, any_ok) = commands::sweep(&model, design, tau, *alpha_grid, cli.coarse)?;
            if !any_ok {
                emit(&cli.out, &text)?;
                return Err(CliError::Numerical("every sweep item failed".into()));
            }
            text
        }
        Command::Trajectory { design, tau } => commands::trajectory(&model, design, *tau, cli.coarse)?,
    };
    emit(&cli.out, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
