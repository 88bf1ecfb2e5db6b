use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use soott::experiments::{self, ExperimentConfig, ExperimentOutcome};
use soott::instances::{self, TauSchedule, DEMO_TRACE_DAYS, DEMO_TRACE_SEED};
use soott::{plot, predictors, AdversarialFunction, Error, ProblemParams};

const EXIT_CONFIG: u8 = 2;
const EXIT_BOUND_VIOLATION: u8 = 3;
const EXIT_SOLVER_FAILURE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "soott",
    version,
    about = "Smoothed online target-tracking experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the base configuration once and write results.csv.
    Run { config: PathBuf },
    /// Run every sweep value, write results.csv and render charts.
    Sweep { config: PathBuf },
    /// Check every bound on the configured randomized batch.
    Bounds { config: PathBuf },
    /// Generate a trace or predictions CSV.
    Gen {
        generator: Generator,
        out: PathBuf,
        #[arg(long, default_value_t = DEMO_TRACE_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEMO_TRACE_DAYS)]
        days: usize,
        /// Input trace for prediction generators.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        lag: usize,
        #[arg(long, default_value_t = 12)]
        window: usize,
    },
    /// Render one chart per sweep from a results CSV.
    Plot { results: PathBuf, dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    /// Synthetic diurnal utilization trace.
    DemoTrace,
    /// Persistence predictions of `1 - utilization` for a trace.
    Persistence,
    /// Moving-average predictions of `1 - utilization` for a trace.
    MovingAverage,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } => EXIT_SOLVER_FAILURE,
        _ => EXIT_CONFIG,
    }
}

fn report(outcome: &ExperimentOutcome, results: &Path) -> u8 {
    println!("wrote {} ({} rows)", results.display(), outcome.rows.len());
    for f in &outcome.failures {
        eprintln!(
            "failed: {} at sweep value {:?}: {}",
            f.algorithm, f.sweep_value, f.error
        );
    }
    let violations: Vec<_> = outcome.violations().collect();
    for v in &violations {
        eprintln!(
            "bound violated at sweep value {:?}: {}",
            v.sweep_value, v.report
        );
    }
    if !violations.is_empty() {
        EXIT_BOUND_VIOLATION
    } else if !outcome.failures.is_empty() {
        EXIT_SOLVER_FAILURE
    } else {
        0
    }
}

fn run(config: &Path, sweep: bool) -> Result<u8, Error> {
    let cfg = ExperimentConfig::load(config)?;
    if sweep && cfg.sweep.is_none() {
        return Err(Error::Config {
            path: "sweep".into(),
            reason: "the sweep command needs a sweep section".into(),
        });
    }
    let outcome = experiments::run_experiment(&cfg, sweep)?;
    let results = outcome.write_to(&cfg.output_dir)?;
    let code = report(&outcome, &results);
    if sweep {
        match plot::render_plots(&results, &cfg.output_dir.join("plots")) {
            Ok(paths) => paths.iter().for_each(|p| println!("wrote {}", p.display())),
            Err(e) => eprintln!("warning: plotting failed: {e}"),
        }
    }
    Ok(code)
}

fn bounds(config: &Path) -> Result<u8, Error> {
    let cfg = ExperimentConfig::load(config)?;
    let out = experiments::validate_bounds(&cfg)?;
    println!(
        "checked {} instances, {} assertions",
        out.instances, out.checks
    );
    for v in &out.violations {
        eprintln!("violation: {v}");
    }
    for f in &out.failures {
        eprintln!("failure: {f}");
    }
    Ok(if !out.violations.is_empty() {
        EXIT_BOUND_VIOLATION
    } else if !out.failures.is_empty() {
        EXIT_SOLVER_FAILURE
    } else {
        0
    })
}

fn generate(
    generator: Generator,
    out: &Path,
    seed: u64,
    days: usize,
    trace: Option<&Path>,
    lag: usize,
    window: usize,
) -> Result<u8, Error> {
    let file = File::create(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    if let Generator::DemoTrace = generator {
        instances::write_trace_csv(&instances::demo_trace(seed, days), file)?;
        return Ok(0);
    }
    let trace = trace.ok_or_else(|| Error::Config {
        path: "--trace".into(),
        reason: "prediction generators need an input trace".into(),
    })?;
    let params = ProblemParams::new(0, 1.0, 1.0, 1)?;
    let inst = instances::load_trace_csv(
        trace,
        &TauSchedule::default(),
        &params,
        AdversarialFunction::quadratic(1.0),
    )?;
    let stream = match generator {
        Generator::Persistence => predictors::persistence_predictor(&inst, lag)?,
        _ => predictors::moving_average_predictor(&inst, window)?,
    };
    predictors::write_predictions_csv(&stream, file)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config, false),
        Command::Sweep { config } => run(config, true),
        Command::Bounds { config } => bounds(config),
        Command::Gen {
            generator,
            out,
            seed,
            days,
            trace,
            lag,
            window,
        } => generate(
            *generator,
            out,
            *seed,
            *days,
            trace.as_deref(),
            *lag,
            *window,
        ),
        Command::Plot { results, dir } => plot::render_plots(results, dir).map(|paths| {
            paths.iter().for_each(|p| println!("wrote {}", p.display()));
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
