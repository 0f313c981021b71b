//! The parameter set under estimation and the exact objective it minimizes.
//!
//! The objective couples an independence term over the demixed signals with
//! an Itakura–Saito fit of each demixed power spectrogram to its low-rank
//! model:
//!
//! `J(W,T,V) = sum_{i,j,n} [ |w_{i,n}^H x_{ij}|^2 / r_{ij,n} + ln r_{ij,n} ]
//!            - 2 J sum_i ln |det W_i|`,
//!
//! with `r_{ij,n} = sum_l t_{il,n} v_{lj,n}`.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::tensors::{DemixingSet, NonnegativeMatrix, SpectrogramTensor};

/// Per-source nonnegative basis (`bins x L`) and activation (`L x frames`)
/// factors.
#[derive(Debug, Clone)]
pub struct SourceModel {
    basis: Vec<NonnegativeMatrix>,
    activation: Vec<NonnegativeMatrix>,
}

impl SourceModel {
    pub fn new(basis: Vec<NonnegativeMatrix>, activation: Vec<NonnegativeMatrix>) -> Result<Self> {
        if basis.is_empty() || basis.len() != activation.len() {
            return Err(Error::DimensionMismatch(format!(
                "need matching per-source factor lists, got {} basis and {} activation",
                basis.len(),
                activation.len()
            )));
        }
        let bins = basis[0].rows();
        let l = basis[0].cols();
        let frames = activation[0].cols();
        for (n, (t, v)) in basis.iter().zip(activation.iter()).enumerate() {
            if t.rows() != bins || t.cols() != l || v.rows() != l || v.cols() != frames {
                return Err(Error::DimensionMismatch(format!(
                    "source {n}: factors {}x{} / {}x{} differ from {bins}x{l} / {l}x{frames}",
                    t.rows(),
                    t.cols(),
                    v.rows(),
                    v.cols()
                )));
            }
        }
        Ok(Self { basis, activation })
    }

    /// Uniform random factors in `(floor, 1)`.
    pub fn random<R: Rng>(
        bins: usize,
        frames: usize,
        basis_count: usize,
        sources: usize,
        floor: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut basis = Vec::with_capacity(sources);
        let mut activation = Vec::with_capacity(sources);
        for _ in 0..sources {
            let t = Array2::from_shape_fn((bins, basis_count), |_| rng.random_range(floor..1.0));
            let v = Array2::from_shape_fn((basis_count, frames), |_| rng.random_range(floor..1.0));
            basis.push(NonnegativeMatrix::new(t, floor)?);
            activation.push(NonnegativeMatrix::new(v, floor)?);
        }
        Self::new(basis, activation)
    }

    pub fn sources(&self) -> usize {
        self.basis.len()
    }

    pub fn bins(&self) -> usize {
        self.basis[0].rows()
    }

    pub fn frames(&self) -> usize {
        self.activation[0].cols()
    }

    pub fn basis_count(&self) -> usize {
        self.basis[0].cols()
    }

    pub fn floor(&self) -> f64 {
        self.basis[0].floor()
    }

    pub fn basis(&self, n: usize) -> &NonnegativeMatrix {
        &self.basis[n]
    }

    pub fn activation(&self, n: usize) -> &NonnegativeMatrix {
        &self.activation[n]
    }

    /// Replaces source `n`'s basis factor, revalidating shapes.
    pub fn with_basis(&self, n: usize, basis: NonnegativeMatrix) -> Result<Self> {
        let mut all = self.basis.clone();
        all[n] = basis;
        Self::new(all, self.activation.clone())
    }

    /// Replaces source `n`'s activation factor, revalidating shapes.
    pub fn with_activation(&self, n: usize, activation: NonnegativeMatrix) -> Result<Self> {
        let mut all = self.activation.clone();
        all[n] = activation;
        Self::new(self.basis.clone(), all)
    }

    /// Modeled power spectrogram of source `n`: `R_n = T_n V_n`, entrywise
    /// `r_{ij,n} = sum_l t_{il,n} v_{lj,n}`. Strictly positive by the floor
    /// invariant.
    pub fn estimated_power(&self, n: usize) -> Array2<f64> {
        self.basis[n].data().dot(self.activation[n].data())
    }
}

/// Demixing set, source model, and the observation they explain.
#[derive(Debug, Clone)]
pub struct IlrmaState {
    demixing: DemixingSet,
    model: SourceModel,
    observation: SpectrogramTensor,
}

impl IlrmaState {
    pub fn new(
        demixing: DemixingSet,
        model: SourceModel,
        observation: SpectrogramTensor,
    ) -> Result<Self> {
        let bins = observation.bins();
        let channels = observation.channels();
        if demixing.bins() != bins {
            return Err(Error::DimensionMismatch(format!(
                "demixing covers {} bins, observation has {bins}",
                demixing.bins()
            )));
        }
        if demixing.sources() != channels {
            return Err(Error::DimensionMismatch(format!(
                "demixing is {0}x{0} but observation has {channels} channels (determined case requires equality)",
                demixing.sources()
            )));
        }
        if model.sources() != channels || model.bins() != bins || model.frames() != observation.frames()
        {
            return Err(Error::DimensionMismatch(format!(
                "source model spans {} sources, {} bins, {} frames; observation is {channels} channels, {bins} bins, {} frames",
                model.sources(),
                model.bins(),
                model.frames(),
                observation.frames()
            )));
        }
        Ok(Self {
            demixing,
            model,
            observation,
        })
    }

    pub fn demixing(&self) -> &DemixingSet {
        &self.demixing
    }

    pub fn model(&self) -> &SourceModel {
        &self.model
    }

    pub fn observation(&self) -> &SpectrogramTensor {
        &self.observation
    }

    pub fn sources(&self) -> usize {
        self.model.sources()
    }

    pub fn with_model(&self, model: SourceModel) -> Result<Self> {
        Self::new(self.demixing.clone(), model, self.observation.clone())
    }

    pub fn with_demixing(&self, demixing: DemixingSet) -> Result<Self> {
        Self::new(demixing, self.model.clone(), self.observation.clone())
    }
}

/// Demixed signals: row `n` of each per-bin matrix holds the filter
/// `w_{i,n}^H`, so `y_{ij,n} = (W_i x_{ij})_n = w_{i,n}^H x_{ij}`.
pub fn separate(state: &IlrmaState) -> SpectrogramTensor {
    let x = state.observation().data();
    let (bins, frames, channels) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut y = Array3::<Complex64>::zeros((bins, frames, channels));
    for i in 0..bins {
        let w = state.demixing().matrix(i);
        for j in 0..frames {
            for n in 0..channels {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..channels {
                    acc += w[[n, m]] * x[[i, j, m]];
                }
                y[[i, j, n]] = acc;
            }
        }
    }
    SpectrogramTensor::new(y).expect("finite demixing of finite observation")
}

/// Squared magnitudes of the demixed signals, per source.
pub(crate) fn demixed_powers(state: &IlrmaState) -> Vec<Array2<f64>> {
    let y = separate(state);
    let (bins, frames, channels) = (y.bins(), y.frames(), y.channels());
    (0..channels)
        .map(|n| Array2::from_shape_fn((bins, frames), |(i, j)| y.data()[[i, j, n]].norm_sqr()))
        .collect()
}

/// Exact objective value at the given state.
///
/// Accumulated in a fixed `(i, j, n)` loop order with compensated summation
/// so per-step monotonicity can be asserted at 1e-10 relative.
pub fn cost(state: &IlrmaState) -> Result<f64> {
    let powers = demixed_powers(state);
    let modeled: Vec<Array2<f64>> = (0..state.sources())
        .map(|n| state.model().estimated_power(n))
        .collect();
    let bins = state.observation().bins();
    let frames = state.observation().frames();

    let mut acc = KahanSum::new();
    for i in 0..bins {
        for j in 0..frames {
            for (p, r) in powers.iter().zip(modeled.iter()) {
                let r_ij = r[[i, j]];
                if !(r_ij > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "modeled power is not positive at bin {i}, frame {j}"
                    )));
                }
                acc.add(p[[i, j]] / r_ij + r_ij.ln());
            }
        }
    }
    let log_det = state.demixing().log_abs_det_sum()?;
    let value = acc.value() - 2.0 * frames as f64 * log_det;
    if !value.is_finite() {
        return Err(Error::NonFinite("cost".into()));
    }
    Ok(value)
}
