//! pixelfem command line: pipelines from pixel microstructure images to
//! homogenized properties, coarsening error tables and two-scale runs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Exit code for configuration problems.
const EXIT_CONFIG: u8 = 2;
/// Exit code for numerical failures.
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "pixelfem", version, about = "Image-based microstructure FEM pipelines")]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true, default_value = "pixelfem.toml")]
    config: PathBuf,

    /// Cap the worker thread count (0 = library default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic microstructure (PGM + material
    /// table).
    Synth,
    /// Compute the homogenized elasticity tensor after the coarsening
    /// plan.
    Homogenize,
    /// Per-step coarsening error tables (CSV/JSON).
    CoarsenStudy {
        /// Override the coarsening variant (a = averaging, b = majority).
        #[arg(long)]
        variant: Option<String>,
        /// Override the number of uniform coarsening steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the number of adaptive quadtree steps.
        #[arg(long)]
        adaptive_steps: Option<usize>,
    },
    /// Two-scale cantilever run with micro recovery at the probe point.
    MacroRun,
    /// Run the invariant suite on the configured problem.
    Validate,
    /// Export the (coarsened) mesh as legacy VTK.
    ExportMesh,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    // Configuration stage: anything failing here is a config error.
    let mut raw = match RunConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Command::CoarsenStudy { variant, steps, adaptive_steps } = &cli.command {
        if let Some(v) = variant {
            raw.coarsen.variant = v.clone();
        }
        if let Some(s) = steps {
            raw.coarsen.uniform_steps = *s;
        }
        if let Some(s) = adaptive_steps {
            raw.coarsen.adaptive_steps = *s;
        }
    }
    let config_dir = cli
        .config
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let cfg = match raw.resolve(&config_dir) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let threads = cli.threads.unwrap_or(cfg.threads);
    if threads > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
        {
            eprintln!("config error: cannot set thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    let result = match &cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Homogenize => commands::cmd_homogenize(&cfg),
        Command::CoarsenStudy { .. } => commands::cmd_coarsen_study(&cfg),
        Command::MacroRun => commands::cmd_macro_run(&cfg),
        Command::Validate => match commands::cmd_validate(&cfg) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("numerical failure: validation checks failed");
                return ExitCode::from(EXIT_NUMERICAL);
            }
            Err(e) => Err(e),
        },
        Command::ExportMesh => commands::cmd_export_mesh(&cfg),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
