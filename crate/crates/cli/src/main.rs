use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fadagg::pipeline::{run_pipeline, run_stage, Counts, PipelineConfig, Stage};
use fadagg::stats::Adjustment;
use fadagg::synthgen::{write_dataset, SynthConfig};
use fadagg::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "fadagg", version, about = "Echo-sounder buoy aggregation pipeline")]
struct Cli {
    /// TOML file with pipeline fields at top level and an optional [synth] table.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Parse, deduplicate and filter buoy and logbook records.
    Clean(PipelineArgs),
    /// Daily presence and tonnage per buoy.
    Estimate(PipelineArgs),
    /// Cut daily series into virgin segments.
    Segment(PipelineArgs),
    /// Binary and spline smoothing of each segment.
    Smooth(PipelineArgs),
    /// Aggregation metrics per segment.
    Metrics(PipelineArgs),
    /// Basin comparisons.
    Stats(PipelineArgs),
    /// Summary tables and plot data.
    Report(PipelineArgs),
    /// Every stage in order.
    Run(PipelineArgs),
}

#[derive(Args, Default)]
struct SynthArgs {
    /// Directory receiving buoys.csv, logbook.csv, truth.csv and bathymetry.txt.
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
    #[arg(long)]
    n_buoys: Option<usize>,
    #[arg(long)]
    days_per_buoy: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Expected sets per 100 days.
    #[arg(long)]
    event_rate: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdjustArg {
    None,
    Holm,
    Bonferroni,
}

impl From<AdjustArg> for Adjustment {
    fn from(a: AdjustArg) -> Self {
        match a {
            AdjustArg::None => Adjustment::None,
            AdjustArg::Holm => Adjustment::Holm,
            AdjustArg::Bonferroni => Adjustment::Bonferroni,
        }
    }
}

/// Overrides on top of the config file; unset flags leave it alone.
#[derive(Args, Default)]
struct PipelineArgs {
    #[arg(long, value_name = "CSV")]
    buoys: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    logbook: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    bathymetry: Option<PathBuf>,
    /// Hourly presence and tonnage replacing the built-in estimator.
    #[arg(long, value_name = "CSV")]
    estimates: Option<PathBuf>,
    #[arg(long, short = 'o', value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    threshold_tons: Option<f64>,
    #[arg(long)]
    max_knots: Option<f64>,
    #[arg(long)]
    min_depth_m: Option<f64>,
    #[arg(long)]
    gap_hours: Option<f64>,
    #[arg(long)]
    min_segment_hours: Option<f64>,
    #[arg(long)]
    max_missing_days: Option<f64>,
    #[arg(long)]
    max_missing_hours: Option<f64>,
    #[arg(long)]
    event_tolerance_hours: Option<f64>,
    #[arg(long)]
    edge_days: Option<usize>,
    #[arg(long)]
    min_peak_segment_days: Option<usize>,
    #[arg(long)]
    atlantic_west: Option<f64>,
    #[arg(long)]
    atlantic_east: Option<f64>,
    #[arg(long)]
    indian_east: Option<f64>,
    #[arg(long)]
    max_abs_lat: Option<f64>,
    /// Comma-separated smoothing penalties.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    adjustment: Option<AdjustArg>,
}

macro_rules! overlay {
    ($target:expr, $args:expr; $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $target.$field = v.into(); })*
    };
}

impl PipelineArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        overlay!(c, self; buoys, logbook, output_dir, threshold_tons, max_knots, min_depth_m,
            gap_hours, min_segment_hours, max_missing_days, max_missing_hours,
            event_tolerance_hours, edge_days, min_peak_segment_days, lambda_grid, adjustment);
        overlay!(c.basins, self; atlantic_west, atlantic_east, indian_east, max_abs_lat);
        if self.bathymetry.is_some() {
            c.bathymetry = self.bathymetry.clone();
        }
        if self.estimates.is_some() {
            c.estimates = self.estimates.clone();
        }
    }
}

impl SynthArgs {
    fn apply(&self, c: &mut SynthConfig) {
        overlay!(c, self; n_buoys, days_per_buoy, seed, noise_sd, event_rate);
    }
}

fn load_config(path: Option<&Path>) -> Result<(PipelineConfig, SynthConfig), Error> {
    let Some(path) = path else {
        return Ok(Default::default());
    };
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |e: &dyn std::fmt::Display| Error::InvalidArgument(format!("{}: {e}", path.display()));
    let mut table: toml::Table = text.parse().map_err(|e| bad(&e))?;
    let synth = match table.remove("synth") {
        Some(v) => v.try_into().map_err(|e| bad(&e))?,
        None => SynthConfig::default(),
    };
    let pipeline = toml::Value::Table(table).try_into().map_err(|e| bad(&e))?;
    Ok((pipeline, synth))
}

fn print_counts(stage: &str, counts: &Counts) {
    let body: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{stage}: {}", body.join(" "));
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let (mut pipeline, mut synth) = load_config(cli.config.as_deref())?;
    let (stage, args) = match &cli.command {
        Command::Synth(a) => {
            a.apply(&mut synth);
            log::info!("writing {} synthetic buoys to {}", synth.n_buoys, a.out_dir.display());
            write_dataset(&synth, &a.out_dir)?;
            println!("synth: buoys={} days_per_buoy={}", synth.n_buoys, synth.days_per_buoy);
            return Ok(());
        }
        Command::Run(a) => (None, a),
        Command::Clean(a) => (Some(Stage::Clean), a),
        Command::Estimate(a) => (Some(Stage::Estimate), a),
        Command::Segment(a) => (Some(Stage::Segment), a),
        Command::Smooth(a) => (Some(Stage::Smooth), a),
        Command::Metrics(a) => (Some(Stage::Metrics), a),
        Command::Stats(a) => (Some(Stage::Stats), a),
        Command::Report(a) => (Some(Stage::Report), a),
    };
    args.apply(&mut pipeline);
    pipeline.validate()?;
    match stage {
        Some(stage) => {
            log::info!("running {stage}");
            let counts = run_stage(&pipeline, stage)?;
            print_counts(stage.as_str(), &counts);
        }
        None => {
            let manifest = run_pipeline(&pipeline)?;
            for stage in Stage::ALL {
                if let Some(counts) = manifest.stages.get(stage.as_str()) {
                    print_counts(stage.as_str(), counts);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let input = e.is_input_error() || matches!(e, Error::InvalidArgument(_));
            ExitCode::from(if input { EXIT_INPUT } else { EXIT_STAGE })
        }
    }
}
