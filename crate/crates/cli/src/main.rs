// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taperprobe::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "taperprobe", version, about = "Fiber-taper probing of photonic-crystal waveguide dispersion")]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides io.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for synthetic measurement noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the parallel solvers (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Recompute band and fiber solutions instead of reading the cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Print the configuration with all defaults filled in.
    #[arg(long, global = true)]
    print_effective_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fundamental-mode dispersion of the taper.
    Fiber(FiberArgs),
    /// Defect branches, bulk stop band and fiber crossing.
    Bands(BandsArgs),
    /// Gap sweep and lateral coupling profile.
    Couple(CoupleArgs),
    /// Transmission maps.
    #[command(subcommand)]
    Map(MapCommand),
}

#[derive(Args, Debug)]
pub struct FiberArgs {
    /// Taper diameter (overrides fiber.diameter_um).
    #[arg(long)]
    pub d_um: Option<f64>,
    /// Tabulate every diameter the taper takes on the map positions.
    #[arg(long, conflicts_with = "d_um")]
    pub profile: bool,
    #[arg(long)]
    pub lambda_start_nm: Option<f64>,
    #[arg(long)]
    pub lambda_stop_nm: Option<f64>,
    #[arg(long)]
    pub lambda_step_nm: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BandsArgs {
    /// Also report the branch shifts for a slab thinned to this thickness.
    #[arg(long, value_name = "NM")]
    pub thinned: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CoupleArgs {
    /// Taper diameter (overrides fiber.diameter_um).
    #[arg(long)]
    pub d_um: Option<f64>,
    /// Only the gap sweep.
    #[arg(long, conflicts_with = "lateral_only")]
    pub sweep_only: bool,
    /// Only the lateral profile.
    #[arg(long)]
    pub lateral_only: bool,
}

#[derive(Subcommand, Debug)]
pub enum MapCommand {
    /// Synthesize a transmission map from the computed bands.
    Synth {
        /// Write the map CSV to standard output instead of the output directory.
        #[arg(long)]
        stdout: bool,
    },
    /// Read dips from a map CSV (`-` for standard input) and convert them to band points.
    Analyze {
        input: PathBuf,
        /// Metadata sidecar; defaults to the input path with a .json extension.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
}

/// Failure with its process exit code: 2 for bad input, 3 for solver failure.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<taperprobe::Error> for Failure {
    fn from(e: taperprobe::Error) -> Self {
        Self {
            code: if e.is_input_error() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            RunConfig::from_toml_str(&text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(cli.config.as_ref())?;
    if cli.print_effective_config {
        print!("{}", store::single_newline(config.to_toml_string()?));
    }
    let Some(command) = cli.command else {
        if cli.print_effective_config {
            return Ok(());
        }
        return Err(Failure::input("no command given (try --help)"));
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&config.io.out_dir));
    let ctx = commands::Context::new(config, out, cli.seed, !cli.no_cache);
    match command {
        Command::Fiber(a) => commands::fiber(&ctx, &a),
        Command::Bands(a) => commands::bands(&ctx, &a),
        Command::Couple(a) => commands::couple(&ctx, &a),
        Command::Map(MapCommand::Synth { stdout }) => commands::map_synth(&ctx, stdout),
        Command::Map(MapCommand::Analyze { input, metadata }) => commands::map_analyze(&ctx, &input, metadata.as_deref()),
    }
}

/// OpenBLAS picks its kernels when the library loads, before `main`. Some
/// builds select AVX-512 kernels that return wrong Cholesky factors on
/// virtualized CPUs, so unless the user chose a core type, restart once with
/// the Haswell kernels.
#[cfg(unix)]
fn pin_blas_kernels() {
    use std::os::unix::process::CommandExt;
    const VAR: &str = "OPENBLAS_CORETYPE";
    if std::env::var_os(VAR).is_some() {
        return;
    }
    let Ok(exe) = std::env::current_exe() else { return };
    let err = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env(VAR, "Haswell")
        .exec();
    eprintln!("warning: could not restart with {VAR}=Haswell: {err}");
}

#[cfg(not(unix))]
fn pin_blas_kernels() {}

fn main() -> ExitCode {
    pin_blas_kernels();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
