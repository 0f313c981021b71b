//! Short-time Fourier transform and its inverse for multichannel signals.
//!
//! Analysis uses a periodic Hann window; synthesis uses the matching dual
//! window so that analysis times synthesis overlap-adds to unity, and the
//! overlap-add accumulator additionally normalizes by the achieved window
//! product. Round trips are exact to FFT rounding over the requested region.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensors::SpectrogramTensor;

/// Analysis window identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi t / N)`.
    Hann,
}

/// Transform geometry.
#[derive(Debug, Clone)]
pub struct StftConfig {
    pub fft_length: usize,
    pub shift: usize,
    pub window: Window,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_length: 4096,
            shift: 2048,
            window: Window::Hann,
            sample_rate: 16000,
        }
    }
}

impl StftConfig {
    pub fn new(fft_length: usize, shift: usize, sample_rate: u32) -> Result<Self> {
        let cfg = Self {
            fft_length,
            shift,
            window: Window::Hann,
            sample_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_length < 2 {
            return Err(Error::InvalidParameter(format!(
                "fft_length must be at least 2, got {}",
                self.fft_length
            )));
        }
        if self.shift == 0 || self.fft_length % self.shift != 0 {
            return Err(Error::InvalidParameter(format!(
                "shift ({}) must divide fft_length ({})",
                self.shift, self.fft_length
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidParameter("sample_rate must be positive".into()));
        }
        // Overlap-add feasibility: the squared analysis window summed over
        // hops must stay bounded away from zero everywhere, otherwise the
        // dual synthesis window does not exist.
        let d = window_power_sum(&analysis_window(self), self.shift);
        if d.iter().any(|&v| v < 1e-8) {
            return Err(Error::InvalidParameter(
                "window/shift pair violates the overlap-add condition".into(),
            ));
        }
        Ok(())
    }

    /// Number of one-sided frequency bins, `fft_length / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_length / 2 + 1
    }
}

fn analysis_window(cfg: &StftConfig) -> Array1<f64> {
    match cfg.window {
        Window::Hann => {
            let n = cfg.fft_length;
            Array1::from_iter(
                (0..n).map(|t| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * t as f64 / n as f64).cos()),
            )
        }
    }
}

/// `d[t mod shift] = sum_k w[t - k*shift]^2`, the shift-periodic window power.
fn window_power_sum(window: &Array1<f64>, shift: usize) -> Vec<f64> {
    let mut d = vec![0.0; shift];
    for (t, &w) in window.iter().enumerate() {
        d[t % shift] += w * w;
    }
    d
}

fn synthesis_window(cfg: &StftConfig) -> Array1<f64> {
    let wa = analysis_window(cfg);
    let d = window_power_sum(&wa, cfg.shift);
    Array1::from_iter(wa.iter().enumerate().map(|(t, &w)| w / d[t % cfg.shift]))
}

/// Reflect-pads `x` with `left` samples before and `right` after.
fn reflect_pad(x: &[f64], left: usize, right: usize) -> Vec<f64> {
    let n = x.len();
    debug_assert!(left < n && right < n);
    let mut out = Vec::with_capacity(n + left + right);
    for k in (1..=left).rev() {
        out.push(x[k]);
    }
    out.extend_from_slice(x);
    for k in 1..=right {
        out.push(x[n - 1 - k]);
    }
    out
}

/// Forward transform of a `samples x channels` signal.
///
/// The signal is reflect-padded by half a window on each side (plus up to one
/// hop on the right so frames tile it exactly), giving
/// `frames = ceil(samples / shift) + 1`.
pub fn stft(signal: &Array2<f64>, cfg: &StftConfig) -> Result<SpectrogramTensor> {
    cfg.validate()?;
    let samples = signal.nrows();
    let channels = signal.ncols();
    if channels == 0 {
        return Err(Error::DimensionMismatch("signal has no channels".into()));
    }
    if samples < cfg.fft_length {
        return Err(Error::SignalTooShort {
            needed: cfg.fft_length,
            got: samples,
        });
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input signal".into()));
    }

    let fft_len = cfg.fft_length;
    let shift = cfg.shift;
    let half = fft_len / 2;
    let extra = (shift - samples % shift) % shift;
    let frames = (samples + extra) / shift + 1;
    let bins = cfg.bins();

    let window = analysis_window(cfg);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_len);

    let mut out = Array3::<Complex64>::zeros((bins, frames, channels));
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    for m in 0..channels {
        let chan: Vec<f64> = signal.column(m).to_vec();
        let padded = reflect_pad(&chan, half, half + extra);
        for j in 0..frames {
            let start = j * shift;
            for t in 0..fft_len {
                buf[t] = Complex64::new(padded[start + t] * window[t], 0.0);
            }
            fft.process(&mut buf);
            for i in 0..bins {
                out[[i, j, m]] = buf[i];
            }
        }
    }
    SpectrogramTensor::new(out)
}

/// Inverse transform back to a `length x channels` signal.
///
/// `length` counts samples after removing the half-window lead-in, i.e. it
/// addresses the same region as the `stft` input.
pub fn istft(spec: &SpectrogramTensor, cfg: &StftConfig, length: usize) -> Result<Array2<f64>> {
    cfg.validate()?;
    let fft_len = cfg.fft_length;
    let shift = cfg.shift;
    let half = fft_len / 2;
    let bins = cfg.bins();
    if spec.bins() != bins {
        return Err(Error::DimensionMismatch(format!(
            "spectrogram has {} bins but fft_length {} implies {}",
            spec.bins(),
            fft_len,
            bins
        )));
    }
    let frames = spec.frames();
    let channels = spec.channels();
    let buffer_len = (frames - 1) * shift + fft_len;
    if length + half > buffer_len {
        return Err(Error::DimensionMismatch(format!(
            "requested {length} samples but {frames} frames reconstruct at most {}",
            buffer_len - half
        )));
    }

    let wa = analysis_window(cfg);
    let ws = synthesis_window(cfg);
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(fft_len);
    let scale = 1.0 / fft_len as f64;

    let mut out = Array2::<f64>::zeros((length, channels));
    let mut acc = vec![0.0f64; buffer_len];
    let mut den = vec![0.0f64; buffer_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    for m in 0..channels {
        acc.iter_mut().for_each(|v| *v = 0.0);
        den.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..frames {
            buf[0] = spec.data()[[0, j, m]];
            for i in 1..bins {
                buf[i] = spec.data()[[i, j, m]];
                if fft_len - i > bins - 1 {
                    buf[fft_len - i] = spec.data()[[i, j, m]].conj();
                }
            }
            ifft.process(&mut buf);
            let start = j * shift;
            for t in 0..fft_len {
                acc[start + t] += ws[t] * buf[t].re * scale;
                den[start + t] += ws[t] * wa[t];
            }
        }
        for s in 0..length {
            let q = s + half;
            if den[q] > 1e-12 {
                out[[s, m]] = acc[q] / den[q];
            }
        }
    }
    Ok(out)
}
