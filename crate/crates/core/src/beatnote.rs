//! Heterodyne beat-note spectrum of two lasers with given frequency-noise
//! spectra: the cosine transform of their joint coherence envelope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::psd::PsdModel;
use crate::special::{sinc, sinc2_hat_weights};

/// Largest envelope value tolerated at the truncation point.
pub const ENVELOPE_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatnoteConfig {
    /// Test laser frequency-noise PSD (rad²/Hz).
    pub s1: PsdModel,
    /// Reference laser frequency-noise PSD (rad²/Hz).
    pub s2: PsdModel,
    /// Beat carrier ω₀ (rad/s).
    pub omega0: f64,
    /// `(αE₁E₂/2)²`.
    pub amp_product: f64,
    /// Envelope truncation τ_max (s).
    pub tau_max: f64,
    /// Output angular frequencies (rad/s).
    pub grid: Vec<f64>,
    /// τ-samples for the cosine transform; chosen automatically when `None`.
    #[serde(default)]
    pub n_tau: Option<usize>,
}

impl BeatnoteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau_max must be positive, got {}", self.tau_max)));
        }
        if !(self.amp_product > 0.0 && self.amp_product.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amp_product must be positive, got {}",
                self.amp_product
            )));
        }
        if !self.omega0.is_finite() {
            return Err(Error::InvalidArgument("omega0 must be finite".into()));
        }
        if self.grid.is_empty() || self.grid.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("spectrum grid must be non-empty and finite".into()));
        }
        Ok(())
    }

    fn combined(&self) -> Result<PsdModel> {
        self.s1.sum(&self.s2)
    }
}

/// `exp{−(τ²/4π) ∫_{−∞}^{∞} S(ω′) sinc²(ω′τ/2) dω′}` for the summed PSD,
/// with the integral taken as twice the half line.
pub fn envelope_of(psd: &PsdModel, tau: f64) -> f64 {
    if tau == 0.0 {
        return 1.0;
    }
    let tau = tau.abs();
    let w = sinc2_hat_weights(psd.grid(), 0.5 * tau, 0.0);
    let smooth: f64 = w.iter().zip(psd.values()).map(|(a, b)| a * b).sum();
    let pre = tau * tau / (4.0 * PI);
    let tones: f64 = psd
        .tones()
        .iter()
        .map(|t| 2.0 * t.delta_weight() * sinc(0.5 * t.omega0 * tau).powi(2))
        .sum();
    (-(pre * (2.0 * smooth + tones))).exp()
}

pub fn coherence_envelope(cfg: &BeatnoteConfig, tau: f64) -> Result<f64> {
    Ok(envelope_of(&cfg.combined()?, tau))
}

/// Smallest `tau_max · 2^k` at which the envelope drops below the cutoff.
pub fn suggest_tau_max(psd: &PsdModel, tau_max: f64) -> Option<f64> {
    let mut tau = tau_max;
    for _ in 0..60 {
        if envelope_of(psd, tau) < ENVELOPE_CUTOFF {
            return Some(tau);
        }
        tau *= 2.0;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatnoteSpectrum {
    pub omega: Vec<f64>,
    pub s_i: Vec<f64>,
    pub n_tau: usize,
}

impl BeatnoteSpectrum {
    /// `10 log10(S_i/max S_i)`.
    pub fn db_normalized(&self) -> Vec<f64> {
        let max = self.s_i.iter().copied().fold(0.0, f64::max);
        self.s_i
            .iter()
            .map(|&s| if max > 0.0 && s > 0.0 { 10.0 * (s / max).log10() } else { f64::NEG_INFINITY })
            .collect()
    }

    pub fn peak(&self) -> (f64, f64) {
        self.omega
            .iter()
            .zip(&self.s_i)
            .fold((f64::NAN, f64::NEG_INFINITY), |b, (&w, &s)| if s > b.1 { (w, s) } else { b })
    }
}

fn auto_n_tau(cfg: &BeatnoteConfig, psd: &PsdModel) -> usize {
    let max_offset = cfg
        .grid
        .iter()
        .map(|w| (w - cfg.omega0).abs())
        .fold(0.0, f64::max);
    let max_tone = psd.tones().iter().map(|t| t.omega0).fold(0.0, f64::max);
    let fastest = max_offset.max(max_tone);
    let by_freq = if fastest > 0.0 {
        (cfg.tau_max * fastest * 8.0 / (2.0 * PI)).ceil() as usize
    } else {
        0
    };
    by_freq.max(4096) + 1
}

/// `S_i(ω) = A ∫_{−τ_max}^{τ_max} cos((ω − ω₀)τ) env(τ) dτ` by the trapezoid
/// rule on the half line (doubled by evenness).
pub fn simulate_beatnote(cfg: &BeatnoteConfig) -> Result<BeatnoteSpectrum> {
    cfg.validate()?;
    let psd = cfg.combined()?;
    let tail = envelope_of(&psd, cfg.tau_max);
    if tail >= ENVELOPE_CUTOFF {
        let suggested = suggest_tau_max(&psd, 2.0 * cfg.tau_max).unwrap_or(f64::INFINITY);
        return Err(Error::TruncationTooShort {
            tau_max: cfg.tau_max,
            envelope: tail,
            suggested,
        });
    }
    let n_tau = cfg.n_tau.unwrap_or_else(|| auto_n_tau(cfg, &psd)).max(3);
    let dtau = cfg.tau_max / (n_tau - 1) as f64;
    let env: Vec<f64> = (0..n_tau)
        .into_par_iter()
        .map(|k| envelope_of(&psd, k as f64 * dtau))
        .collect();
    let s_i = cfg
        .grid
        .par_iter()
        .map(|&w| {
            let d = w - cfg.omega0;
            let mut acc = 0.0;
            for (k, e) in env.iter().enumerate() {
                let c = if k == 0 || k == n_tau - 1 { 0.5 } else { 1.0 };
                acc += c * e * (d * k as f64 * dtau).cos();
            }
            2.0 * cfg.amp_product * acc * dtau
        })
        .collect();
    Ok(BeatnoteSpectrum {
        omega: cfg.grid.clone(),
        s_i,
        n_tau,
    })
}
