//! Scale restoration and separation metrics: projection back to a reference
//! microphone, a scalar-projection SDR, and a report that resolves the
//! source permutation before scoring.

use ndarray::{Array1, Array2, Array3, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{separate, IlrmaState};
use crate::stft::{istft, StftConfig};
use crate::tensors::SpectrogramTensor;

/// SDR values are clamped to this magnitude in dB; an exact match would
/// otherwise be infinite.
pub const SDR_CAP_DB: f64 = 300.0;

/// Fixed reference microphone for projection back and reporting.
pub const REFERENCE_CHANNEL: usize = 0;

/// Per-source separation quality for one finished run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// SDR of the unprocessed mixture at the reference microphone against
    /// each ground-truth image, in dB.
    pub sdr_before: Vec<f64>,
    /// SDR of the permutation-aligned estimates, in dB.
    pub sdr_after: Vec<f64>,
    /// `sdr_after - sdr_before`, entry by entry.
    pub improvement: Vec<f64>,
    /// `permutation[n]` is the estimate channel scored against truth `n`.
    pub permutation: Vec<usize>,
    pub p: f64,
    pub seed: u64,
    pub iterations: usize,
}

/// Undoes the per-source scale ambiguity: channel `n` of the result is
/// `[W_i^{-1}]_{ref,n} * y_{ij,n}`, source `n`'s estimated contribution at
/// the reference microphone.
pub fn projection_back(state: &IlrmaState, reference: usize) -> Result<SpectrogramTensor> {
    let n = state.sources();
    if reference >= n {
        return Err(Error::InvalidParameter(format!(
            "reference channel {reference} out of range for {n} sources"
        )));
    }
    let y = separate(state);
    let (bins, frames) = (y.bins(), y.frames());
    let mut z = Array3::<Complex64>::zeros((bins, frames, n));
    for i in 0..bins {
        let inv = linalg::inverse(state.demixing().matrix(i))
            .map_err(|e| Error::Singular(format!("projection back at bin {i}: {e}")))?;
        for j in 0..frames {
            for k in 0..n {
                z[[i, j, k]] = inv[[reference, k]] * y.data()[[i, j, k]];
            }
        }
    }
    SpectrogramTensor::new(z)
}

/// Signal-to-distortion ratio in dB with a time-invariant scalar gain: the
/// estimate is projected onto the reference, and the ratio of projection
/// power to residual power is scored. Clamped to +-[`SDR_CAP_DB`].
pub fn sdr(estimate: &Array1<f64>, reference: &Array1<f64>) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if !(ref_energy > 0.0) {
        return Err(Error::InvalidParameter(
            "reference signal is identically zero".into(),
        ));
    }
    let inner: f64 = estimate.iter().zip(reference.iter()).map(|(e, r)| e * r).sum();
    let gain = inner / ref_energy;
    let target = gain * gain * ref_energy;
    let residual: f64 = estimate
        .iter()
        .zip(reference.iter())
        .map(|(e, r)| {
            let d = e - gain * r;
            d * d
        })
        .sum();
    if !(target > 0.0) {
        return Ok(-SDR_CAP_DB);
    }
    if residual <= 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in permutations(n - 1) {
            let mut p = vec![first];
            p.extend(rest.iter().map(|&r| if r < first { r } else { r + 1 }));
            out.push(p);
        }
    }
    out
}

/// Extra run metadata carried into the report.
#[derive(Debug, Clone, Copy)]
pub struct RunInfo {
    pub p: f64,
    pub seed: u64,
    pub iterations: usize,
}

/// Scores a finished state against ground-truth source images at the
/// reference microphone. Signals are compared in the time domain; the
/// permutation maximizing total SDR over all `N!` assignments is reported.
pub fn evaluate_run(
    state: &IlrmaState,
    images: &SpectrogramTensor,
    cfg: &StftConfig,
    info: RunInfo,
) -> Result<EvalReport> {
    let n = state.sources();
    if images.channels() != n
        || images.bins() != state.observation().bins()
        || images.frames() != state.observation().frames()
    {
        return Err(Error::DimensionMismatch(
            "ground-truth images do not match the observation".into(),
        ));
    }
    let frames = state.observation().frames();
    if frames < 2 {
        return Err(Error::DimensionMismatch(
            "evaluation needs at least two frames".into(),
        ));
    }
    let length = (frames - 1) * cfg.shift;

    let refs = istft(images, cfg, length)?;
    let mixture = istft(state.observation(), cfg, length)?;
    let estimates = istft(&projection_back(state, REFERENCE_CHANNEL)?, cfg, length)?;
    let mix_ref = mixture.index_axis(Axis(1), REFERENCE_CHANNEL).to_owned();

    let ref_cols: Vec<Array1<f64>> = (0..n).map(|k| refs.index_axis(Axis(1), k).to_owned()).collect();
    let est_cols: Vec<Array1<f64>> = (0..n)
        .map(|k| estimates.index_axis(Axis(1), k).to_owned())
        .collect();

    let mut sdr_before = Vec::with_capacity(n);
    for truth in ref_cols.iter() {
        sdr_before.push(sdr(&mix_ref, truth)?);
    }

    // pairwise table, then exhaustive assignment search
    let mut table = Array2::<f64>::zeros((n, n));
    for (e, est) in est_cols.iter().enumerate() {
        for (t, truth) in ref_cols.iter().enumerate() {
            table[[e, t]] = sdr(est, truth)?;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(n) {
        let total: f64 = (0..n).map(|t| table[[perm[t], t]]).sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, perm));
        }
    }
    let (_, permutation) = best.expect("at least one permutation");

    let sdr_after: Vec<f64> = (0..n).map(|t| table[[permutation[t], t]]).collect();
    let improvement: Vec<f64> = sdr_after
        .iter()
        .zip(sdr_before.iter())
        .map(|(a, b)| a - b)
        .collect();
    Ok(EvalReport {
        sdr_before,
        sdr_after,
        improvement,
        permutation,
        p: info.p,
        seed: info.seed,
        iterations: info.iterations,
    })
}
