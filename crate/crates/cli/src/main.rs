use std::path::PathBuf;
use std::process::ExitCode;

use areatol::io::{Config, OutputFormat};
use areatol::pipeline::{run_analyze, run_simulate, run_validate, PipelineError};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "areatol", version, about = "Parcel area measurement accuracy: buffers, outliers, ANOVA and tolerances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full analysis and write buffers.csv and the report.
    Analyze(Common),
    /// Generate a synthetic campaign (observations.csv, parcels.geojson, roster.json, analyze.toml).
    Simulate(Common),
    /// Check inputs (schema, geometry, references) without computing statistics.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides [monte_carlo] seed and the simulation seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Report format (overrides [output] format).
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Text => OutputFormat::Text,
            Format::Both => OutputFormat::Both,
        }
    }
}

fn load(args: &Common) -> Result<Config, PipelineError> {
    let mut cfg = Config::load(&args.config).map_err(|e| PipelineError::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(f) = args.format {
        cfg.output.format = f.into();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Analyze(args) => {
            let cfg = load(&args)?;
            let (analysis, files) = run_analyze(&cfg)?;
            for w in &analysis.report.warnings {
                eprintln!("warning: {w}");
            }
            let r = &analysis.report;
            println!(
                "analyzed {} observations ({} flagged as outliers) on {} images",
                r.campaign.observations, r.outliers.flagged_count, r.images.len()
            );
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            for f in run_simulate(&cfg)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Validate(args) => {
            let cfg = load(&args)?;
            let s = run_validate(&cfg)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "ok: {} parcels, {} operators, {} images, {} observations",
                s.parcels, s.operators, s.images, s.observations
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
