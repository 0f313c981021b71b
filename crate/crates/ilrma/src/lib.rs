//! Determined blind source separation in the time-frequency domain.
//!
//! The estimator demixes a multichannel mixture with per-bin linear filters
//! while modeling each separated source's power spectrogram as a low-rank
//! nonnegative product. Filters are refit by iterative projection; the
//! low-rank factors are refit by multiplicative rules whose step size is
//! governed by a convergence-speed exponent `p` in `(0, 1]`, with `p = 0.5`
//! giving the conventional rules.

pub mod error;
pub mod evaluation;
mod kahan;
pub mod linalg;
pub mod mixer;
pub mod model;
pub mod optimizer;
pub mod stft;
pub mod surrogate;
pub mod tensors;
pub mod wav;

pub use error::{Error, Result};
pub use evaluation::{EvalReport, RunInfo};
pub use mixer::{Fixture, MixSpec, Mixing, SourceKind};
pub use model::{cost, separate, IlrmaState, SourceModel};
pub use optimizer::OptimizerConfig;
pub use stft::{istft, stft, StftConfig, Window};
pub use tensors::{DemixingSet, NonnegativeMatrix, SpectrogramTensor, FLOOR};
