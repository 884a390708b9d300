use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oddarm::bound::solve_dstar;
use oddarm::experiment::{
    emit_results, parse_arms, parse_config, preset, resolve_parallelism, run_sweep, sig9,
    write_records_csv, ExperimentError, Format,
};

const EXIT_ERROR: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "oddarm",
    version,
    about = "Odd-arm identification in rested Markov bandits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Experiment document (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment document.
    #[arg(long, value_parser = ["fig1"])]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo sweep and emit one row per (L, delta, mode).
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; ODDARM_THREADS takes precedence.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Output file; defaults to the document's `output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        /// Also write per-trial outcomes to this CSV file.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Print the hardness constant and its forced-exploration variants.
    Bound {
        #[command(flatten)]
        source: Source,
        /// Comma-separated exploration rates.
        #[arg(long, value_delimiter = ',')]
        delta: Vec<f64>,
    },
}

fn read_source(source: &Source) -> Result<String, ExperimentError> {
    match (&source.config, &source.preset) {
        (Some(path), _) => Ok(fs::read_to_string(path)?),
        (None, Some(name)) => preset(name)
            .map(str::to_string)
            .ok_or_else(|| ExperimentError::Validation(format!("unknown preset {name:?}"))),
        (None, None) => Err(ExperimentError::Validation(
            "need --config or --preset".into(),
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    source: &Source,
    trials: Option<u64>,
    seed: Option<u64>,
    parallelism: Option<usize>,
    out: Option<PathBuf>,
    format: OutputFormat,
    records: Option<PathBuf>,
) -> Result<u8, ExperimentError> {
    let mut config = parse_config(&read_source(source)?)?;
    if let Some(t) = trials {
        if t == 0 {
            return Err(ExperimentError::Validation(
                "trials must be at least 1".into(),
            ));
        }
        config.trials = t;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let env = std::env::var("ODDARM_THREADS").ok();
    config.parallelism = resolve_parallelism(config.parallelism, parallelism, env.as_deref())?;
    let report = run_sweep(&config)?;
    let format = match format {
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Json => Format::Json,
    };
    let out = out.or_else(|| config.output.clone());
    emit_results(&report.rows, format, out.as_deref())?;
    if let Some(path) = records {
        write_records_csv(&report.records, &config.points, fs::File::create(path)?)?;
    }
    let caps = report.cap_hits();
    if caps > 0 {
        eprintln!(
            "warning: {caps} trial(s) hit the step cap of {}",
            config.max_steps
        );
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn bound(source: &Source, deltas: &[f64]) -> Result<u8, ExperimentError> {
    let arms = parse_arms(&read_source(source)?)?;
    if let Some(&d) = deltas.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(ExperimentError::Validation(format!(
            "delta must lie in (0, 1), got {d}"
        )));
    }
    let sol = solve_dstar(
        arms.odd_matrix(),
        arms.common_matrix(),
        arms.num_arms(),
        arms.odd_index(),
    )?;
    println!("d_star {}", sig9(sol.d_star));
    println!("lambda_star {}", sig9(sol.lambda_star));
    println!("inv_d_star {}", sig9(1.0 / sol.d_star));
    for &d in deltas {
        println!("d_star_delta {} {}", sig9(d), sig9(sol.d_star_delta(d)?));
    }
    Ok(0)
}

fn report(e: &ExperimentError, path: Option<&Path>) -> u8 {
    match path {
        Some(p) => eprintln!("error ({}): {e}", p.display()),
        None => eprintln!("error: {e}"),
    }
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_ERROR
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, path) = match cli.command {
        Command::Simulate {
            source,
            trials,
            seed,
            parallelism,
            out,
            format,
            records,
        } => (
            simulate(&source, trials, seed, parallelism, out, format, records),
            source.config,
        ),
        Command::Bound { source, delta } => (bound(&source, &delta), source.config),
    };
    ExitCode::from(match result {
        Ok(code) => code,
        Err(e) => report(&e, path.as_deref()),
    })
}
