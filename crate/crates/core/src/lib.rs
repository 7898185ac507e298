//! Noise spectroscopy with a continuously driven qubit.
//!
//! * [`noise`]: Gaussian noise synthesis from a [`PsdModel`] and Welch /
//!   autocorrelation estimators.
//! * [`qubit`]: Monte-Carlo Bloch dynamics under the noise.
//! * [`filter`]: filter function and closed-form survival predictions.
//! * [`lln`]: strong coherent tones, their dressed-frame decay and fits.
//! * [`estimator`]: rectangular estimates and gradient refinement of `S(ω)`.
//! * [`discriminator`]: laser/magnetic separation from two transitions.
//! * [`beatnote`]: heterodyne beat-note spectra.
//!
//! Frequencies are angular (rad/s). A PSD `S(ω)` is stored for `ω ≥ 0` with
//! `S(ω) = ∫ C(τ) e^{−iωτ} dτ`, so the variance of the process is
//! `(1/π) ∫₀^∞ S(ω) dω` and white samples of variance `σ²` at spacing `dt`
//! have `S = σ²·dt`.

pub mod beatnote;
pub mod curve;
pub mod discriminator;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod io;
pub mod lln;
pub mod lsq;
pub mod noise;
pub mod psd;
pub mod qubit;
pub mod special;

pub use curve::DecayCurve;
pub use error::{Error, Result};
pub use lln::LlnTone;
pub use noise::NoiseTrajectory;
pub use psd::PsdModel;
