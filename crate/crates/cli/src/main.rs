//! `gne`: generate instances, run sweeps, search for the potential's minimum and
//! summarize artifacts.
//!
//! Exit codes: 0 on success, 1 for configuration, input or i/o errors, 2 when the
//! numerics failed (including sweeps in which a cell failed numerically).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use incentive_gne::harness::{
    generate_instance, render_table, report, resolve_output_dir, run_experiment, Coupling, ExperimentConfig,
    InstanceDocument, InstanceSpec, OUTPUT_ROOT_ENV,
};
use incentive_gne::{global_minimizer_oracle, Error, OracleSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "gne", version, about = "Incentive-driven equilibrium seeking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance and write it as JSON.
    Generate {
        #[arg(long, default_value_t = 20)]
        agents: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also couple the last agent with the first.
        #[arg(long)]
        ring: bool,
        /// Per-agent dimensions, comma separated (default: all scalar).
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lower: f64,
        #[arg(long, default_value_t = 1.0)]
        upper: f64,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every cell of a sweep config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Multi-start search for the minimum of the potential on an instance.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Aggregate a sweep directory into report.json and report.txt.
    Report { dir: PathBuf },
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Error> {
    match output {
        Some(p) => std::fs::write(p, format!("{text}\n"))
            .map_err(|e| Error::Format(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Generate { agents, seed, ring, dims, lower, upper, output } => {
            let spec = InstanceSpec {
                num_agents: agents,
                dims,
                lower,
                upper,
                coupling: if ring { Coupling::Ring } else { Coupling::Chain },
                seed,
            };
            let (game, geom) = generate_instance(&spec)?;
            emit(&InstanceDocument::new(&game, &geom)?.to_json()?, output.as_deref())?;
        }
        Command::Run { config, output } => {
            let cfg = ExperimentConfig::read(&config)?;
            let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
            let dir = resolve_output_dir(output.as_deref().unwrap_or(&cfg.output_dir), root.as_deref());
            let summary = run_experiment(&cfg, &dir)?;
            let failed = summary.failures();
            eprintln!("{} cells, {failed} failed; artifacts in {}", summary.cells.len(), dir.display());
            for c in summary.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("  {}: {}", c.label, c.error.as_deref().unwrap_or_default());
            }
            if failed > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Oracle { instance, starts, seed, output } => {
            let (game, geom) = InstanceDocument::read(&instance)?.build()?;
            let settings = OracleSettings { starts, ..Default::default() };
            let result = global_minimizer_oracle(&game, &geom, &settings, &mut ChaCha8Rng::seed_from_u64(seed))?;
            emit(&serde_json::to_string_pretty(&result)?, output.as_deref())?;
        }
        Command::Report { dir } => {
            let rep = report(&dir)?;
            print!("{}", render_table(&rep));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap uses 2 for usage errors; here 2 means a numerical failure
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
