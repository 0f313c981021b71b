//! Experiment execution: input loading, per-trial seed derivation, parallel
//! runs, and file output.
//!
//! Seed splitting, so result files can be reproduced without this binary:
//! the trial seed is `mix64(master + (k + 1) * 0x9E3779B97F4A7C15)` for
//! trial index `k`, where `mix64` is the SplitMix64 finalizer. Within a
//! trial, purpose-specific seeds are `mix64(trial_seed + stream)` with
//! stream 0 = fixture synthesis, 1 = optimizer initialization, 2 = the p
//! draw when `p = random`. The drawn value is `1 - u` with `u` the first
//! f64 from a ChaCha8 generator on stream 2, so it lies in `(0, 1]`.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ilrma::evaluation::{evaluate_run, projection_back, RunInfo, REFERENCE_CHANNEL};
use ilrma::mixer::default_fixture;
use ilrma::stft::{istft, stft};
use ilrma::wav::{read_wav, write_wav, WavData};
use ilrma::{OptimizerConfig, SpectrogramTensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{InputSpec, PChoice, RunConfig};
use crate::results::{render, ResultRow};

const STREAM_FIXTURE: u64 = 0;
const STREAM_OPTIMIZER: u64 = 1;
const STREAM_P: u64 = 2;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `k`, derived from the master seed (see module docs).
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    mix64(master.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn stream_seed(trial_seed: u64, stream: u64) -> u64 {
    mix64(trial_seed.wrapping_add(stream))
}

fn draw_p(cfg: &RunConfig, seed_k: u64) -> f64 {
    match cfg.p {
        PChoice::Fixed(p) => p,
        PChoice::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed_k, STREAM_P));
            1.0 - rng.random::<f64>()
        }
    }
}

/// Observation plus whatever ground truth the input kind offers.
struct TrialInput {
    observation: SpectrogramTensor,
    /// Per-source images at the reference microphone; synthetic input only.
    images: Option<SpectrogramTensor>,
    /// Reconstruction length in samples for WAV output.
    samples: usize,
}

enum LoadedInput {
    /// One spectrogram shared by every trial.
    Wav { observation: SpectrogramTensor, samples: usize },
    /// A fresh fixture is drawn per trial from the trial's fixture stream.
    Synthetic,
}

fn load_input(cfg: &RunConfig) -> Result<LoadedInput> {
    match &cfg.input {
        InputSpec::Wav(path) => {
            let data = read_wav(path)
                .map_err(|e| anyhow!("cannot read {}: {e}", path.display()))?;
            if data.channels() < 2 {
                bail!(
                    "{} has {} channel(s); separation needs at least 2",
                    path.display(),
                    data.channels()
                );
            }
            if data.sample_rate != cfg.stft.sample_rate {
                bail!(
                    "{} is sampled at {} Hz but the configuration says {} Hz; \
                     resampling is not performed, adjust sample_rate instead",
                    path.display(),
                    data.sample_rate,
                    cfg.stft.sample_rate
                );
            }
            let samples = data.len();
            let observation = stft(&data.samples, &cfg.stft)
                .map_err(|e| anyhow!("cannot transform {}: {e}", path.display()))?;
            Ok(LoadedInput::Wav { observation, samples })
        }
        InputSpec::Synthetic(_) => Ok(LoadedInput::Synthetic),
    }
}

fn trial_input(cfg: &RunConfig, loaded: &LoadedInput, seed_k: u64) -> Result<TrialInput> {
    match loaded {
        LoadedInput::Wav { observation, samples } => Ok(TrialInput {
            observation: observation.clone(),
            images: None,
            samples: *samples,
        }),
        LoadedInput::Synthetic => {
            let fixture = default_fixture(
                cfg.stft.bins(),
                cfg.synthetic_frames,
                stream_seed(seed_k, STREAM_FIXTURE),
            )
            .map_err(|e| anyhow!("cannot synthesize fixture: {e}"))?;
            let images = fixture.source_images(REFERENCE_CHANNEL)?;
            Ok(TrialInput {
                samples: (fixture.observation.frames() - 1) * cfg.stft.shift,
                observation: fixture.observation,
                images: Some(images),
            })
        }
    }
}

struct RunOutput {
    row: ResultRow,
    trace: Vec<f64>,
    estimates: Option<WavData>,
}

fn execute(cfg: &RunConfig, loaded: &LoadedInput, trial: usize, basis_count: usize) -> Result<RunOutput> {
    let seed_k = trial_seed(cfg.seed, trial);
    let p = draw_p(cfg, seed_k);
    let input = trial_input(cfg, loaded, seed_k)?;

    let opt = OptimizerConfig {
        p,
        iterations: cfg.iterations,
        normalize: true,
        record_cost: true,
        seed: stream_seed(seed_k, STREAM_OPTIMIZER),
    };
    let (state, trace) = ilrma::optimizer::run(input.observation, basis_count, &opt)
        .map_err(|e| anyhow!("trial {trial}, L = {basis_count}: {e}"))?;
    let final_cost = *trace.last().expect("recorded trace is never empty");

    let report = match &input.images {
        Some(images) => Some(
            evaluate_run(
                &state,
                images,
                &cfg.stft,
                RunInfo {
                    p,
                    seed: seed_k,
                    iterations: cfg.iterations,
                },
            )
            .map_err(|e| anyhow!("trial {trial}, L = {basis_count}: evaluation: {e}"))?,
        ),
        None => None,
    };

    let estimates = if cfg.write_wavs {
        let z = projection_back(&state, REFERENCE_CHANNEL)
            .map_err(|e| anyhow!("trial {trial}, L = {basis_count}: projection back: {e}"))?;
        let samples = istft(&z, &cfg.stft, input.samples)
            .map_err(|e| anyhow!("trial {trial}, L = {basis_count}: inverse transform: {e}"))?;
        Some(WavData {
            sample_rate: cfg.stft.sample_rate,
            samples,
        })
    } else {
        None
    };

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let row = ResultRow {
        trial,
        seed: seed_k,
        p,
        basis_count,
        final_cost,
        trace_file: format!("trace_trial{trial:04}_L{basis_count}.csv"),
        sdr_improvement: report.as_ref().map(|r| mean(&r.improvement)),
        per_source_improvement: report.as_ref().map(|r| r.improvement.clone()).unwrap_or_default(),
        sdr_before: report.as_ref().map(|r| r.sdr_before.clone()).unwrap_or_default(),
        sdr_after: report.as_ref().map(|r| r.sdr_after.clone()).unwrap_or_default(),
    };
    Ok(RunOutput {
        row,
        trace,
        estimates,
    })
}

fn render_trace(trace: &[f64]) -> String {
    let mut out = String::from("iteration,cost\n");
    for (i, c) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{c}\n"));
    }
    out
}

/// Runs every (trial, basis count) combination, in parallel, and writes
/// `results.csv`, one cost-trace CSV per run, and (optionally) separated
/// WAVs into the output directory. Rows land in trial order regardless of
/// completion order.
pub fn run_experiment(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let loaded = load_input(cfg)?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;

    let jobs: Vec<(usize, usize)> = (0..cfg.trials)
        .flat_map(|k| cfg.basis_counts.iter().map(move |&l| (k, l)))
        .collect();
    log::info!(
        "{} runs: {} trial(s) x {} basis count(s), {} iterations, p = {}",
        jobs.len(),
        cfg.trials,
        cfg.basis_counts.len(),
        cfg.iterations,
        cfg.p
    );

    let outputs: Vec<RunOutput> = jobs
        .par_iter()
        .map(|&(trial, l)| execute(cfg, &loaded, trial, l))
        .collect::<Result<_>>()?;

    // jobs were generated in (trial, basis-count) order and collect()
    // preserves it, so the rows are already ordered
    let rows: Vec<ResultRow> = outputs.iter().map(|o| o.row.clone()).collect();
    write_text(&cfg.output_dir.join("results.csv"), &render(&rows))?;
    for output in &outputs {
        write_text(
            &cfg.output_dir.join(&output.row.trace_file),
            &render_trace(&output.trace),
        )?;
        if let Some(wav) = &output.estimates {
            let name = format!(
                "estimates_trial{:04}_L{}.wav",
                output.row.trial, output.row.basis_count
            );
            let path = cfg.output_dir.join(&name);
            write_wav(&path, wav).map_err(|e| anyhow!("cannot write {}: {e}", path.display()))?;
        }
    }
    log::info!("wrote {}", cfg.output_dir.join("results.csv").display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
