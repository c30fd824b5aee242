use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ensemble_extremes::config::{validate_config, Diagnostic, RunConfig};
use ensemble_extremes::pipeline::{Pipeline, Stage};
use ensemble_extremes::Error;
use serde_json::json;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Ensemble extreme-value pipeline.
///
/// `ENSX_WORKSPACE` overrides the workspace root and `ENSX_JOBS` the worker
/// count. Exit status: 0 ok, 1 invalid config, 2 runtime failure, 3 (or the
/// configured `convergence_exit_code`) when fits carry R-hat warnings.
#[derive(Debug, Parser)]
#[command(name = "ensx", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, short, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 uses every core. Takes precedence over ENSX_JOBS.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn", env = "ENSX_LOG")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic ensembles, truth table and land mask.
    Synth,
    /// Convert paired t2m/dewpoint blocks to heat-index blocks.
    HeatIndex,
    /// Reduce blocks to per-member seasonal maxima.
    Extract,
    /// Bayesian GEV fits of the small ensemble.
    Fit,
    /// Containment probabilities against the huge-ensemble thresholds.
    Compare,
    /// Tables, histograms and maps.
    Report,
    /// Run the pipeline, or the listed stages in pipeline order.
    Run {
        #[arg(long = "stage", value_name = "STAGE", value_parser = parse_stage)]
        stages: Vec<Stage>,
    },
    /// Check the config and print every problem found.
    Validate,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn print_diagnostics(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("invalid config: {d}");
    }
}

fn runtime_failure(stage: Option<Stage>, err: &dyn std::error::Error) -> ExitCode {
    let mut causes = Vec::new();
    let mut src = err.source();
    while let Some(e) = src {
        causes.push(e.to_string());
        src = e.source();
    }
    let report = json!({
        "error": err.to_string(),
        "stage": stage.map(Stage::name),
        "causes": causes,
    });
    eprintln!("{report}");
    ExitCode::from(EXIT_RUNTIME)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();

    let Some(path) = cli.config.clone() else {
        eprintln!("invalid config: --config is required");
        return ExitCode::from(EXIT_VALIDATION);
    };

    let diags = match validate_config(&path) {
        Ok(d) => d,
        Err(e) => return runtime_failure(None, &e),
    };
    if let Command::Validate = cli.command {
        if diags.is_empty() {
            println!("{}: ok", path.display());
            return ExitCode::SUCCESS;
        }
        print_diagnostics(&diags);
        return ExitCode::from(EXIT_VALIDATION);
    }
    if !diags.is_empty() {
        print_diagnostics(&diags);
        return ExitCode::from(EXIT_VALIDATION);
    }

    let mut cfg = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return runtime_failure(None, &e),
    };
    if let Err(e) = cfg.apply_env() {
        eprintln!("invalid config: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    let diags = cfg.diagnostics();
    if !diags.is_empty() {
        print_diagnostics(&diags);
        return ExitCode::from(EXIT_VALIDATION);
    }

    let stages = match cli.command {
        Command::Synth => vec![Stage::Synth],
        Command::HeatIndex => vec![Stage::HeatIndex],
        Command::Extract => vec![Stage::Extract],
        Command::Fit => vec![Stage::Fit],
        Command::Compare => vec![Stage::Compare],
        Command::Report => vec![Stage::Report],
        Command::Run { stages } if stages.is_empty() => Stage::ALL.to_vec(),
        Command::Run { stages } => stages,
        Command::Validate => unreachable!("handled above"),
    };

    let pipeline = match Pipeline::new(cfg) {
        Ok(p) => p,
        Err(e) => return runtime_failure(None, &e),
    };
    match pipeline.run(&stages) {
        Ok(outcome) => {
            if outcome.failed_fits > 0 {
                eprintln!("{} cell fits failed", outcome.failed_fits);
            }
            if outcome.convergence_warnings > 0 {
                eprintln!(
                    "{} cells with R-hat above threshold",
                    outcome.convergence_warnings
                );
            }
            let code = outcome.exit_code(pipeline.config());
            ExitCode::from(u8::try_from(code).unwrap_or(EXIT_RUNTIME))
        }
        Err(failure) => runtime_failure(Some(failure.stage), &failure.error),
    }
}
