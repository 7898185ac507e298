//! Filter function of a continuously driven qubit and the closed-form decay
//! it predicts for a Gaussian noise spectrum.
//!
//! The decay exponent `χ(t) = ∫₀^∞ S(ω) F(ω, Ω, t) dω` is evaluated exactly
//! for the piecewise-linear spectrum: each hat function of the PSD grid is
//! integrated against both `sinc²` lobes in closed form, so the filter
//! width never has to be resolved by sampling.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use crate::psd::PsdModel;
use crate::special::{sinc, sinc2_hat_weights};

/// Beyond this exponent the second-order cumulant expansion is unreliable.
pub const CHI_WARN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Drive Rabi frequency Ω (rad/s).
    pub omega_drive: f64,
    /// Evolution time t (s).
    pub t: f64,
}

impl FilterSpec {
    pub fn new(omega_drive: f64, t: f64) -> Result<Self> {
        if !(omega_drive > 0.0 && omega_drive.is_finite()) {
            return Err(Error::InvalidArgument(format!("drive frequency must be positive, got {omega_drive}")));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("duration must be positive, got {t}")));
        }
        Ok(Self { omega_drive, t })
    }
}

/// `F(ω, Ω, t) = t²[sinc²((ω+Ω)t/2) + sinc²((ω−Ω)t/2)]/(4π)`.
pub fn filter_function(omega: f64, spec: &FilterSpec) -> f64 {
    let t = spec.t;
    let a = sinc(0.5 * (omega + spec.omega_drive) * t);
    let b = sinc(0.5 * (omega - spec.omega_drive) * t);
    t * t * (a * a + b * b) / (4.0 * PI)
}

/// Weights `W_i` with `∫₀^∞ S(ω) F(ω, Ω, t) dω = Σ_i S(ω_i) W_i` for any `S`
/// linear between the grid nodes and flat beyond them. Zero at `t = 0`.
pub fn chi_weights(grid: &[f64], omega_drive: f64, t: f64) -> Vec<f64> {
    if t == 0.0 {
        return vec![0.0; grid.len()];
    }
    let a = 0.5 * t;
    let pre = t * t / (4.0 * PI);
    let lo = sinc2_hat_weights(grid, a, -omega_drive);
    let hi = sinc2_hat_weights(grid, a, omega_drive);
    lo.iter().zip(&hi).map(|(x, y)| pre * (x + y)).collect()
}

/// Exponent contributed by the discrete tones of `psd` (delta weights).
pub fn tone_chi(psd: &PsdModel, omega_drive: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let spec = FilterSpec { omega_drive, t };
    psd.tones()
        .iter()
        .map(|tone| tone.delta_weight() * filter_function(tone.omega0, &spec))
        .sum()
}

/// `χ(t) = ∫₀^∞ S(ω) F(ω, Ω, t) dω`, tones included.
pub fn chi(psd: &PsdModel, omega_drive: f64, t: f64) -> f64 {
    let w = chi_weights(psd.grid(), omega_drive, t);
    let smooth: f64 = w.iter().zip(psd.values()).map(|(w, s)| w * s).sum();
    smooth + tone_chi(psd, omega_drive, t)
}

/// `½ + ½ cos(δ_A t) e^{−χ(t)}` at each time, returned as a noiseless curve.
pub fn predict_decay(psd: &PsdModel, omega: f64, times: &[f64], delta_a: f64) -> Result<DecayCurve> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("drive frequency must be positive, got {omega}")));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("times must be finite and non-negative".into()));
    }
    let mut p = Vec::with_capacity(times.len());
    let mut warned = false;
    for &t in times {
        let x = chi(psd, omega, t);
        if x > CHI_WARN && !warned {
            log::warn!(
                "decay exponent {x:.2} at t = {t:e} s, Ω = {omega:e} rad/s exceeds {CHI_WARN}; \
                 the Gaussian prediction is unreliable there"
            );
            warned = true;
        }
        p.push((0.5 + 0.5 * (delta_a * t).cos() * (-x).exp()).clamp(0.0, 1.0));
    }
    let mut curve = DecayCurve::new(omega, times.to_vec(), p, vec![0.0; times.len()])?;
    curve.delta_a = Some(delta_a);
    Ok(curve)
}
