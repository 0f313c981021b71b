//! Synthetic instantaneous mixtures with known ground truth: sources drawn
//! from a low-rank power model with circular-complex Gaussian coefficients,
//! mixed per bin by a nonsingular matrix. Everything is seed-deterministic
//! so separation results can be reproduced bit for bit.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensors::SpectrogramTensor;

/// `|det A_i|` below this triggers a warning: the mixture is still produced,
/// but no demixing filter can recover the sources.
const NEAR_SINGULAR_DET: f64 = 1e-9;

/// Power attenuation applied to basis entries outside a source's own band in
/// the disjoint fixture. The bed keeps every per-bin mixture full rank and,
/// because it shares the source's activations, ties each band to the source
/// that dominates it; it must stay above the squared mixing gain or the
/// observation at a microphone carries more of the other source's band than
/// of this source's own bed, and runs initialized at the identity converge
/// to a solution that merges both dominant bands into one output.
pub const OFF_BAND_POWER: f64 = 0.1;

/// Per-bin mixing matrices, either one matrix shared by all bins or an
/// explicit list.
#[derive(Debug, Clone)]
pub enum Mixing {
    Flat(Array2<Complex64>),
    PerBin(Vec<Array2<Complex64>>),
}

impl Mixing {
    pub fn channels(&self) -> usize {
        match self {
            Mixing::Flat(a) => a.nrows(),
            Mixing::PerBin(v) => v[0].nrows(),
        }
    }

    pub fn sources(&self) -> usize {
        match self {
            Mixing::Flat(a) => a.ncols(),
            Mixing::PerBin(v) => v[0].ncols(),
        }
    }

    pub fn matrix_for_bin(&self, i: usize) -> &Array2<Complex64> {
        match self {
            Mixing::Flat(a) => a,
            Mixing::PerBin(v) => &v[i],
        }
    }

    fn validate(&self, bins: usize) -> Result<()> {
        let (m, n) = (self.channels(), self.sources());
        if let Mixing::PerBin(v) = self {
            if v.len() != bins {
                return Err(Error::DimensionMismatch(format!(
                    "expected {bins} mixing matrices, got {}",
                    v.len()
                )));
            }
            for (i, a) in v.iter().enumerate() {
                if a.nrows() != m || a.ncols() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "mixing matrix at bin {i} is {}x{}, expected {m}x{n}",
                        a.nrows(),
                        a.ncols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How the ground-truth source spectrograms are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Every source's power is low-rank over the full band.
    LowRank,
    /// Each source dominates its own contiguous band of bins; outside it the
    /// same basis columns continue at [`OFF_BAND_POWER`] attenuation, so the
    /// dominant supports are disjoint while every bin still hears every
    /// source.
    DisjointLowRank,
}

#[derive(Debug, Clone)]
pub struct MixSpec {
    pub mixing: Mixing,
    pub source_kind: SourceKind,
    /// Rank of each ground-truth power spectrogram.
    pub true_basis_count: usize,
}

impl MixSpec {
    pub fn validate(&self, bins: usize) -> Result<()> {
        if self.true_basis_count == 0 {
            return Err(Error::InvalidParameter(
                "true_basis_count must be at least 1".into(),
            ));
        }
        if self.mixing.channels() != self.mixing.sources() {
            return Err(Error::DimensionMismatch(format!(
                "mixing must be square for a determined mixture, got {}x{}",
                self.mixing.channels(),
                self.mixing.sources()
            )));
        }
        self.mixing.validate(bins)
    }
}

/// A generated instance: sources, their true powers, the mixture, and the
/// spec that produced it.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub sources: SpectrogramTensor,
    pub true_powers: Vec<Array2<f64>>,
    pub observation: SpectrogramTensor,
    pub spec: MixSpec,
}

impl Fixture {
    /// Per-source contribution at microphone `reference`: channel `n` holds
    /// `A_i[reference, n] * s_{ij,n}`, the signal source `n` alone would
    /// produce there.
    pub fn source_images(&self, reference: usize) -> Result<SpectrogramTensor> {
        let s = self.sources.data();
        let (bins, frames, n) = (
            self.sources.bins(),
            self.sources.frames(),
            self.sources.channels(),
        );
        if reference >= self.spec.mixing.channels() {
            return Err(Error::InvalidParameter(format!(
                "reference channel {reference} out of range"
            )));
        }
        let mut out = Array3::<Complex64>::zeros((bins, frames, n));
        for i in 0..bins {
            let a = self.spec.mixing.matrix_for_bin(i);
            for j in 0..frames {
                for k in 0..n {
                    out[[i, j, k]] = a[[reference, k]] * s[[i, j, k]];
                }
            }
        }
        SpectrogramTensor::new(out)
    }
}

/// Draws ground-truth low-rank powers and circular-complex Gaussian source
/// coefficients with those powers. Returns the sources and the powers.
pub fn synthesize_sources(
    bins: usize,
    frames: usize,
    sources: usize,
    spec: &MixSpec,
    seed: u64,
) -> Result<(SpectrogramTensor, Vec<Array2<f64>>)> {
    spec.validate(bins)?;
    if bins == 0 || frames == 0 || sources == 0 {
        return Err(Error::DimensionMismatch(
            "bins, frames, and sources must all be positive".into(),
        ));
    }
    if sources != spec.mixing.sources() {
        return Err(Error::DimensionMismatch(format!(
            "spec mixes {} sources, requested {sources}",
            spec.mixing.sources()
        )));
    }
    let l = spec.true_basis_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active = Uniform::new(0.5, 1.5).expect("static range");
    let normal = StandardNormal;

    let mut powers = Vec::with_capacity(sources);
    for n in 0..sources {
        // band of bins this source occupies; the full band unless disjoint
        let (lo, hi) = match spec.source_kind {
            SourceKind::LowRank => (0, bins),
            SourceKind::DisjointLowRank => {
                let lo = n * bins / sources;
                let hi = (n + 1) * bins / sources;
                (lo, hi.max(lo + 1))
            }
        };
        let mut t = Array2::<f64>::zeros((bins, l));
        for i in 0..bins {
            let scale = if i >= lo && i < hi { 1.0 } else { OFF_BAND_POWER };
            for k in 0..l {
                t[[i, k]] = scale * active.sample(&mut rng);
            }
        }
        let v = Array2::<f64>::from_shape_fn((l, frames), |_| active.sample(&mut rng));
        powers.push(t.dot(&v));
    }

    let mut s = Array3::<Complex64>::zeros((bins, frames, sources));
    for n in 0..sources {
        for i in 0..bins {
            for j in 0..frames {
                let sigma = (powers[n][[i, j]] / 2.0).sqrt();
                let re: f64 = normal.sample(&mut rng);
                let im: f64 = normal.sample(&mut rng);
                s[[i, j, n]] = Complex64::new(sigma * re, sigma * im);
            }
        }
    }
    Ok((SpectrogramTensor::new(s)?, powers))
}

/// Applies the per-bin mixing: `x_{ij} = A_i s_{ij}`. A nearly singular
/// matrix still mixes but logs a warning, since nothing can undo it.
pub fn mix(sources: &SpectrogramTensor, spec: &MixSpec) -> Result<SpectrogramTensor> {
    let (bins, frames, n) = (sources.bins(), sources.frames(), sources.channels());
    spec.validate(bins)?;
    if spec.mixing.sources() != n {
        return Err(Error::DimensionMismatch(format!(
            "mixing expects {} sources, tensor has {n}",
            spec.mixing.sources()
        )));
    }
    let m = spec.mixing.channels();
    let s = sources.data();
    let mut x = Array3::<Complex64>::zeros((bins, frames, m));
    for i in 0..bins {
        let a = spec.mixing.matrix_for_bin(i);
        if m == n {
            match linalg::log_abs_det(a) {
                Ok(v) if v.exp() < NEAR_SINGULAR_DET => {
                    log::warn!("mixing matrix at bin {i} is nearly singular; sources will be unrecoverable");
                }
                Err(_) => {
                    log::warn!("mixing matrix at bin {i} is singular; sources will be unrecoverable");
                }
                _ => {}
            }
        }
        for j in 0..frames {
            for row in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for col in 0..n {
                    acc += a[[row, col]] * s[[i, j, col]];
                }
                x[[i, j, row]] = acc;
            }
        }
    }
    SpectrogramTensor::new(x)
}

/// The desk-scale default instance: two sources with disjoint dominant rank-2
/// power structure, mixed by the frequency-flat matrix `[[1, 0.2], [0.2, 1]]`
/// (condition number 1.5). The squared gain 0.04 sits below
/// [`OFF_BAND_POWER`]; see that constant for why the ordering matters.
pub fn default_fixture(bins: usize, frames: usize, seed: u64) -> Result<Fixture> {
    let a = Array2::from_shape_vec(
        (2, 2),
        vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.2, 0.0),
            Complex64::new(0.2, 0.0),
            Complex64::new(1.0, 0.0),
        ],
    )
    .expect("static shape");
    let spec = MixSpec {
        mixing: Mixing::Flat(a),
        source_kind: SourceKind::DisjointLowRank,
        true_basis_count: 2,
    };
    let (sources, true_powers) = synthesize_sources(bins, frames, 2, &spec, seed)?;
    let observation = mix(&sources, &spec)?;
    Ok(Fixture {
        sources,
        true_powers,
        observation,
        spec,
    })
}
