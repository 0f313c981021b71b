//! Blind source separation experiment driver.
//!
//! The default invocation runs separation trials and writes `results.csv`
//! plus per-run cost traces into the output directory; the `summarize`
//! subcommand aggregates one or more results files into per-(L, p-bin) SDR
//! statistics.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ilrma_cli::config::{parse_basis_list, InputSpec, PChoice, PartialConfig};
use ilrma_cli::{results, runner};

#[derive(Parser)]
#[command(
    name = "ilrma",
    version,
    about = "Determined blind source separation with low-rank source models",
    after_help = "Without a subcommand, runs the experiment described by the flags \
                  (and --config file, if given; flags win)."
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate results files into per-(L, p-bin) SDR improvement stats
    Summarize {
        /// results.csv files to aggregate
        #[arg(required = true, value_name = "CSV")]
        csvs: Vec<PathBuf>,
        /// Write the summary here instead of stdout
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// WAV path, or `synthetic:default` for the built-in 2x2 fixture
    #[arg(long, value_name = "PATH|synthetic:NAME")]
    input: Option<String>,

    /// Convergence-speed exponent: a value in (0, 1], or `random` for one
    /// uniform draw per trial
    #[arg(long, value_name = "P|random")]
    p: Option<String>,

    /// Comma-separated basis counts; every trial runs each one. The
    /// standard sweep is 10,20,40,60
    #[arg(long = "L", value_name = "L1[,L2,...]")]
    basis_counts: Option<String>,

    /// Optimizer iterations per run
    #[arg(long, value_name = "N")]
    iterations: Option<usize>,

    /// Number of random-seed trials
    #[arg(long, value_name = "N")]
    trials: Option<usize>,

    /// Master seed; per-trial seeds are derived from it
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Transform length in samples
    #[arg(long, value_name = "SAMPLES")]
    fft_length: Option<usize>,

    /// Hop between frames in samples
    #[arg(long, value_name = "SAMPLES")]
    shift: Option<usize>,

    /// Where results.csv, traces, and WAVs go
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Also write the separated estimates as 32-bit float WAVs
    #[arg(long)]
    write_wavs: bool,

    /// Flat key = value config file; any flag may also be a key there
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Summarize { csvs, output }) => summarize(&csvs, output.as_deref()),
        None => run(cli.run),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let from_file = match &args.config {
        Some(path) => PartialConfig::from_file(path)?,
        None => PartialConfig::default(),
    };
    let from_cli = PartialConfig {
        input: args.input.as_deref().map(InputSpec::parse).transpose()?,
        p: args.p.as_deref().map(PChoice::parse).transpose()?,
        basis_counts: args
            .basis_counts
            .as_deref()
            .map(parse_basis_list)
            .transpose()?,
        iterations: args.iterations,
        trials: args.trials,
        seed: args.seed,
        fft_length: args.fft_length,
        shift: args.shift,
        sample_rate: None,
        synthetic_frames: None,
        output_dir: args.output_dir,
        write_wavs: args.write_wavs.then_some(true),
    };
    let cfg = from_cli.over(from_file).resolve()?;
    runner::run_experiment(&cfg)
}

fn summarize(csvs: &[PathBuf], output: Option<&std::path::Path>) -> Result<()> {
    let rows = results::read_files(csvs)?;
    let summary = results::summarize(&rows)?;
    let text = results::render_summary(&summary);
    match output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
