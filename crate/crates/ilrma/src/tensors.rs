//! Core numeric containers shared by all modules.
//!
//! Index convention throughout the crate: `(frequency bin i, time frame j,
//! channel or source index)`, and loops are written in that order.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;

/// Hard lower bound applied to every nonnegative model entry after each
/// multiplicative update. Keeps the divisions in the cost and in the update
/// rules away from zero without measurably moving converged solutions.
pub const FLOOR: f64 = 1e-12;

/// Complex STFT coefficients indexed `(bin, frame, channel)`.
#[derive(Debug, Clone)]
pub struct SpectrogramTensor {
    data: Array3<Complex64>,
}

impl SpectrogramTensor {
    /// Wraps raw coefficients, rejecting non-finite entries.
    pub fn new(data: Array3<Complex64>) -> Result<Self> {
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram tensor".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(bins: usize, frames: usize, channels: usize) -> Self {
        Self {
            data: Array3::zeros((bins, frames, channels)),
        }
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    /// Consumes the tensor, returning the underlying array.
    pub fn into_inner(self) -> Array3<Complex64> {
        self.data
    }
}

/// Real matrix with every entry floored at a strictly positive value.
#[derive(Debug, Clone)]
pub struct NonnegativeMatrix {
    data: Array2<f64>,
    floor: f64,
}

impl NonnegativeMatrix {
    /// Validates that every entry is finite and at least `floor`.
    pub fn new(data: Array2<f64>, floor: f64) -> Result<Self> {
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "floor must be positive and finite, got {floor}"
            )));
        }
        for &v in data.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite("nonnegative matrix".into()));
            }
            if v < floor {
                return Err(Error::InvalidParameter(format!(
                    "entry {v} below floor {floor}"
                )));
            }
        }
        Ok(Self { data, floor })
    }

    /// Clamps entries up to `floor` instead of rejecting them. Non-finite
    /// entries are still an error.
    pub fn floored(mut data: Array2<f64>, floor: f64) -> Result<Self> {
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "floor must be positive and finite, got {floor}"
            )));
        }
        for v in data.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite("nonnegative matrix".into()));
            }
            if *v < floor {
                *v = floor;
            }
        }
        Ok(Self { data, floor })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

/// One complex demixing matrix per frequency bin.
///
/// The matrices are square (determined case: as many sources as channels).
/// Nonsingularity is checked where a determinant or inverse is actually
/// evaluated, and a violation surfaces as [`Error::Singular`].
#[derive(Debug, Clone)]
pub struct DemixingSet {
    matrices: Vec<Array2<Complex64>>,
}

impl DemixingSet {
    pub fn new(matrices: Vec<Array2<Complex64>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::DimensionMismatch(
                "demixing set needs at least one bin".into(),
            ));
        }
        let n = matrices[0].nrows();
        for (i, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "demixing matrix for bin {i} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite(format!("demixing matrix for bin {i}")));
            }
        }
        Ok(Self { matrices })
    }

    /// Identity demixing for every bin.
    pub fn identity(bins: usize, sources: usize) -> Self {
        let eye = Array2::eye(sources);
        Self {
            matrices: vec![eye; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.matrices.len()
    }

    pub fn sources(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn matrix(&self, bin: usize) -> &Array2<Complex64> {
        &self.matrices[bin]
    }

    pub fn matrices(&self) -> &[Array2<Complex64>] {
        &self.matrices
    }

    pub fn matrices_mut(&mut self) -> &mut [Array2<Complex64>] {
        &mut self.matrices
    }

    /// `sum_i ln |det W_i|`, failing on any singular bin.
    pub fn log_abs_det_sum(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (i, m) in self.matrices.iter().enumerate() {
            acc += linalg::log_abs_det(m).map_err(|e| match e {
                Error::Singular(msg) => Error::Singular(format!("bin {i}: {msg}")),
                other => other,
            })?;
        }
        Ok(acc)
    }
}
