//! Strong discrete noise tones ("laser-like noise").
//!
//! A tone `f_D(t) = E₀ cos(ω₀t + φ₀)` close to the drive frequency acts as a
//! second, weak drive in the dressed frame: with `Δ = ω₀ − Ω` the static
//! field is tilted by `η = arctan(Ω_LLN/Δ)` from the drive axis and the qubit
//! precesses at `Ω_R = √(Ω_LLN² + Δ²)`. Relaxation in the tilted basis is
//! described by the rates `Γ̃₁` (along the tilted axis) and `Γ̃₂` (transverse).
//! See `docs/lln-decay-model.md` for the derivation of the survival curve.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmFit, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlnTone {
    /// Tone centre ω₀ (rad/s).
    pub omega0: f64,
    /// Resonant Rabi frequency Ω_LLN = E₀/2 (rad/s).
    pub omega_lln: f64,
    /// Initial phase φ₀ (rad).
    #[serde(default)]
    pub phi0: f64,
}

impl LlnTone {
    pub fn new(omega0: f64, omega_lln: f64, phi0: f64) -> Self {
        Self { omega0, omega_lln, phi0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0.is_finite() && self.omega0 >= 0.0) {
            return Err(Error::InvalidPsd(format!("tone frequency {}", self.omega0)));
        }
        if !(self.omega_lln.is_finite() && self.omega_lln >= 0.0) {
            return Err(Error::InvalidPsd(format!("tone Rabi frequency {}", self.omega_lln)));
        }
        Ok(())
    }

    /// `E₀ = 2 Ω_LLN`.
    pub fn amplitude(&self) -> f64 {
        2.0 * self.omega_lln
    }

    /// Weight of the delta `S_k δ(ω − ω₀)` on `ω ≥ 0` that reproduces the
    /// tone's autocorrelation `(E₀²/2) cos(ω₀τ)`: `S_k = πE₀²/2 = 2πΩ_LLN²`.
    pub fn delta_weight(&self) -> f64 {
        2.0 * PI * self.omega_lln * self.omega_lln
    }

    /// `πE₀² = 4πΩ_LLN²`: the strength convention behind the commonly
    /// quoted 4.007×10⁹ rad²/Hz for Ω_LLN = 2π·2.842 kHz.
    pub fn strength_pi_e0_sq(&self) -> f64 {
        PI * self.amplitude().powi(2)
    }

    /// `πΩ_LLN²`, the literal formula that accompanies that number.
    pub fn strength_pi_omega_sq(&self) -> f64 {
        PI * self.omega_lln * self.omega_lln
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedRates {
    pub eta: f64,
    pub omega_r: f64,
    pub gamma1_t: f64,
    pub gamma2_t: f64,
    pub gamma1: f64,
    pub gamma_phi: f64,
    pub gamma_v: f64,
}

/// Tilt angle `η = arctan(Ω_LLN/Δ)` (π/2 on resonance) and `Ω_R`.
pub fn tilt(omega_lln: f64, delta: f64) -> (f64, f64) {
    let eta = if delta == 0.0 {
        PI / 2.0
    } else {
        (omega_lln / delta).atan()
    };
    (eta, omega_lln.hypot(delta))
}

pub fn dressed_rates(
    gamma1: f64,
    gamma_phi: f64,
    gamma_v: f64,
    omega_lln: f64,
    delta: f64,
) -> Result<DressedRates> {
    for (name, v) in [("gamma1", gamma1), ("gamma_phi", gamma_phi), ("gamma_v", gamma_v)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
        }
    }
    let (eta, omega_r) = tilt(omega_lln, delta);
    let c2 = eta.cos().powi(2);
    let s2 = eta.sin().powi(2);
    let gamma1_t = 0.5 * (1.0 + c2) * gamma1 + gamma_v * s2;
    let gamma_phi_t = 0.5 * gamma1 * s2 + gamma_phi * c2;
    Ok(DressedRates {
        eta,
        omega_r,
        gamma1_t,
        gamma2_t: 0.5 * gamma1_t + gamma_phi_t,
        gamma1,
        gamma_phi,
        gamma_v,
    })
}

/// `cos²η` and `sin²η` from `Δ²` and `Ω_LLN` without going through the angle.
fn tilt_weights(delta_sq: f64, omega_lln: f64) -> (f64, f64, f64) {
    let r2 = delta_sq + omega_lln * omega_lln;
    if r2 == 0.0 {
        return (1.0, 0.0, 0.0);
    }
    (delta_sq / r2, omega_lln * omega_lln / r2, r2.sqrt())
}

fn survival(c2: f64, s2: f64, omega_r: f64, g1t: f64, g2t: f64, t: f64) -> f64 {
    0.5 + 0.5 * (c2 * (-g1t * t).exp() + s2 * (-g2t * t).exp() * (omega_r * t).cos())
}

/// `P_s(t) = ½ + ½[cos²η e^{−Γ̃₁t} + sin²η e^{−Γ̃₂t} cos(Ω_R t)]`: the +X
/// projection of a Bloch vector starting on +X, split into its parts along
/// and across the tilted field axis.
pub fn lln_decay_model(tone: &LlnTone, omega: f64, rates: &DressedRates, times: &[f64]) -> Vec<f64> {
    let delta = tone.omega0 - omega;
    let (c2, s2, omega_r) = tilt_weights(delta * delta, tone.omega_lln);
    times
        .iter()
        .map(|&t| survival(c2, s2, omega_r, rates.gamma1_t, rates.gamma2_t, t))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LlnFitOptions {
    /// Fit Γ_v as an extra free rate instead of fixing it to zero.
    pub free_gamma_v: bool,
    /// Curves with reduced χ² at or above this are excluded from pooling.
    pub chi2_gate: f64,
    /// Add the counter-rotating (Bloch–Siegert) shift `Ω_LLN²/(4ω₀)` back
    /// onto each fitted tone frequency. The decay model drops the
    /// counter-rotating part of the tone, which pulls the apparent resonance
    /// down by that amount.
    pub bloch_siegert: bool,
    /// Other known tones. Each shifts the dressed resonance at drive Ω by
    /// `Ω_j²·Ω/(Ω² − ω_j²)`, which is added back like the counter-rotating
    /// shift.
    pub spectators: Vec<LlnTone>,
    pub lm: LmOptions,
}

impl Default for LlnFitOptions {
    fn default() -> Self {
        Self {
            free_gamma_v: false,
            chi2_gate: 4.0,
            bloch_siegert: true,
            spectators: Vec::new(),
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlnCurveFit {
    pub omega: f64,
    /// Signed detuning Δ = ω₀ − Ω; sign assigned during pooling.
    pub delta: f64,
    pub delta_sigma: f64,
    pub omega_lln: f64,
    pub omega_lln_sigma: f64,
    pub gamma1_t: f64,
    pub gamma2_t: f64,
    pub gamma1: f64,
    pub gamma_phi: f64,
    pub gamma_v: f64,
    /// Background S(Ω) = 2Γ₁ (rad²/Hz).
    pub s_omega: f64,
    pub s_omega_sigma: f64,
    /// Tone frequency implied by this curve, `Ω + Δ` plus any
    /// counter-rotating correction.
    pub omega0: f64,
    /// Correction included in `omega0` (rad/s).
    pub bloch_siegert_shift: f64,
    /// Shift from spectator tones included in `omega0` (rad/s).
    #[serde(default)]
    pub spectator_shift: f64,
    pub chi2_red: f64,
    pub converged: bool,
    /// Parameter covariance in fit order (Δ², Ω_LLN, rates...).
    pub covariance: Option<Vec<Vec<f64>>>,
    pub param_names: Vec<String>,
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToneStrengths {
    /// 2πΩ_LLN²: delta weight used in filter integrals (rad²/Hz).
    pub delta_weight: f64,
    /// πE₀² = 4πΩ_LLN².
    pub pi_e0_squared: f64,
    /// πΩ_LLN².
    pub pi_omega_lln_squared: f64,
}

impl From<&LlnTone> for ToneStrengths {
    fn from(t: &LlnTone) -> Self {
        Self {
            delta_weight: t.delta_weight(),
            pi_e0_squared: t.strength_pi_e0_sq(),
            pi_omega_lln_squared: t.strength_pi_omega_sq(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlnFitReport {
    pub omega0: f64,
    pub omega0_sigma: f64,
    pub omega_lln: f64,
    pub omega_lln_sigma: f64,
    pub strengths: ToneStrengths,
    pub curves: Vec<LlnCurveFit>,
    pub excluded: Vec<usize>,
}

impl LlnFitReport {
    pub fn tone(&self) -> LlnTone {
        LlnTone::new(self.omega0, self.omega_lln, 0.0)
    }
}

/// Strongest oscillation frequency in a curve, by a direct Fourier scan over
/// its (possibly non-uniform) time points.
fn dominant_frequency(times: &[f64], p: &[f64]) -> f64 {
    let n = times.len();
    let mean = p.iter().sum::<f64>() / n as f64;
    let span = times[n - 1] - times[0];
    let min_dt = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let lo = 0.5 * 2.0 * PI / span;
    let hi = PI / min_dt;
    let step = 2.0 * PI / span / 20.0;
    let mut best = (lo, 0.0);
    let mut w = lo;
    while w <= hi {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, y) in times.iter().zip(p) {
            re += (y - mean) * (w * t).cos();
            im += (y - mean) * (w * t).sin();
        }
        let pw = re * re + im * im;
        if pw > best.1 {
            best = (w, pw);
        }
        w += step;
    }
    best.0
}

/// Decay rate of the oscillation envelope: per-period peak amplitudes of
/// `|P − ½|`, regressed in log space.
fn envelope_rate(times: &[f64], p: &[f64], omega_r: f64) -> Option<f64> {
    let period = 2.0 * PI / omega_r;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut start = times[0];
    let t_end = *times.last().unwrap();
    while start < t_end {
        let peak = times
            .iter()
            .zip(p)
            .filter(|(t, _)| **t >= start && **t < start + period)
            .map(|(t, y)| (*t, (y - 0.5).abs()))
            .fold(None, |acc: Option<(f64, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            });
        if let Some((t, a)) = peak {
            if a > 1e-3 {
                pts.push((t, a.ln()));
            }
        }
        start += period;
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then_some(-slope)
}

struct RawFit {
    fit: LmFit,
    names: Vec<String>,
}

fn fit_single(curve: &DecayCurve, opts: &LlnFitOptions) -> Result<RawFit> {
    if curve.len() < 6 {
        return Err(Error::InvalidArgument("an LLN fit needs at least 6 points".into()));
    }
    let t = &curve.times;
    let p = &curve.p_s;
    let inv_sigma = curve.inverse_sigmas();
    let span = curve.t_max() - t[0];
    let omega_r0 = dominant_frequency(t, p);
    let g2_0 = envelope_rate(t, p, omega_r0).unwrap_or(1.0 / span);

    let free_v = opts.free_gamma_v;
    // Parameters: [Δ², Ω_LLN, Γ̃₁, Γ̃₂] or, with Γ_v free, [Δ², Ω_LLN, Γ₁, Γ_φ, Γ_v].
    let model = |q: &[f64], time: f64| -> f64 {
        let (c2, s2, omega_r) = tilt_weights(q[0], q[1]);
        let (g1t, g2t) = if free_v {
            let c2s = c2;
            let s2s = s2;
            let g1t = 0.5 * (1.0 + c2s) * q[2] + q[4] * s2s;
            (g1t, 0.5 * g1t + 0.5 * q[2] * s2s + q[3] * c2s)
        } else {
            (q[2], q[3])
        };
        survival(c2, s2, omega_r, g1t, g2t, time)
    };
    let residuals = |q: &[f64]| -> Vec<f64> {
        t.iter()
            .zip(p)
            .zip(&inv_sigma)
            .map(|((&ti, &pi), &w)| (model(q, ti) - pi) * w)
            .collect()
    };

    let rate_hi = 1e3 / span;
    let omega_hi = 10.0 * omega_r0 + 1.0;
    let (lower, upper, names): (Vec<f64>, Vec<f64>, Vec<&str>) = if free_v {
        (
            vec![0.0; 5],
            vec![omega_hi * omega_hi, omega_hi, rate_hi, rate_hi, rate_hi],
            vec!["delta_sq", "omega_lln", "gamma1", "gamma_phi", "gamma_v"],
        )
    } else {
        (
            vec![0.0; 4],
            vec![omega_hi * omega_hi, omega_hi, rate_hi, rate_hi],
            vec!["delta_sq", "omega_lln", "gamma1_t", "gamma2_t"],
        )
    };
    let scale: Vec<f64> = {
        let mut s = vec![omega_r0 * omega_r0, omega_r0, 1.0 / span, 1.0 / span];
        if free_v {
            s.push(1.0 / span);
        }
        s
    };

    let mut best: Option<LmFit> = None;
    for &s2 in &[0.15, 0.4, 0.7, 0.9, 0.99] {
        for &gmul in &[0.3, 1.0, 3.0] {
            let g2 = g2_0 * gmul;
            let mut q0 = vec![
                (1.0 - s2) * omega_r0 * omega_r0,
                s2.sqrt() * omega_r0,
            ];
            if free_v {
                q0.extend([g2, 0.5 * g2, 0.0]);
            } else {
                q0.extend([g2, g2]);
            }
            let fit = levenberg_marquardt(residuals, &q0, &lower, &upper, &scale, &opts.lm);
            if best.as_ref().is_none_or(|b| fit.cost < b.cost) {
                best = Some(fit);
            }
        }
    }
    let fit = best.ok_or_else(|| Error::FitFailed("no fit attempts".into()))?;
    if !fit.cost.is_finite() {
        return Err(Error::FitFailed(format!("non-finite cost at Ω = {}", curve.omega)));
    }
    Ok(RawFit {
        fit,
        names: names.into_iter().map(String::from).collect(),
    })
}

fn curve_fit_summary(curve: &DecayCurve, raw: &RawFit, opts: &LlnFitOptions) -> LlnCurveFit {
    let fit = &raw.fit;
    let q = &fit.params;
    let chi2_red = fit.reduced_chi2();
    let inflate = chi2_red.max(1.0).sqrt();
    let (c2, s2, _) = tilt_weights(q[0], q[1]);
    let delta = q[0].sqrt();
    let var_dsq = fit.sigma(0).powi(2) * inflate * inflate;
    let delta_sigma = if delta * delta > var_dsq.sqrt() {
        var_dsq.sqrt() / (2.0 * delta)
    } else {
        var_dsq.sqrt().sqrt()
    };
    let omega_lln_sigma = fit.sigma(1) * inflate;

    let (gamma1_t, gamma2_t, gamma1, gamma_phi, gamma_v, gamma1_sigma) = if opts.free_gamma_v {
        let r = dressed_rates(q[2], q[3], q[4], q[1], delta).expect("bounded rates");
        (r.gamma1_t, r.gamma2_t, q[2], q[3], q[4], fit.sigma(2) * inflate)
    } else {
        let gamma1 = 2.0 * q[2] / (1.0 + c2);
        let gamma_phi = if c2 > 1e-9 {
            ((q[3] - 0.5 * q[2] - 0.5 * gamma1 * s2) / c2).max(0.0)
        } else {
            0.0
        };
        (q[2], q[3], gamma1, gamma_phi, 0.0, 2.0 * fit.sigma(2) * inflate / (1.0 + c2))
    };
    let covariance = fit.covariance.as_ref().map(|c| {
        (0..c.nrows())
            .map(|i| (0..c.ncols()).map(|j| c[(i, j)] * inflate * inflate).collect())
            .collect()
    });
    let mut excluded = None;
    if !fit.converged {
        excluded = Some(format!("did not converge; residual rms {:.3e}", (fit.cost / fit.n_residuals as f64).sqrt()));
    } else if chi2_red >= opts.chi2_gate {
        excluded = Some(format!("reduced chi2 {chi2_red:.2} >= {}", opts.chi2_gate));
    }
    LlnCurveFit {
        omega: curve.omega,
        delta,
        delta_sigma,
        omega_lln: q[1],
        omega_lln_sigma,
        gamma1_t,
        gamma2_t,
        gamma1,
        gamma_phi,
        gamma_v,
        s_omega: 2.0 * gamma1,
        s_omega_sigma: 2.0 * gamma1_sigma,
        omega0: curve.omega + delta,
        bloch_siegert_shift: 0.0,
        spectator_shift: 0.0,
        chi2_red,
        converged: fit.converged,
        covariance,
        param_names: raw.names.clone(),
        excluded,
    }
}

/// Shift of the dressed resonance at drive `omega` from off-resonant tones:
/// co-rotating `Ω_j²/(2(Ω − ω_j))` plus counter-rotating `Ω_j²/(2(Ω + ω_j))`.
pub fn spectator_shift(tones: &[LlnTone], omega: f64) -> f64 {
    tones
        .iter()
        .map(|t| t.omega_lln * t.omega_lln * omega / (omega * omega - t.omega0 * t.omega0))
        .filter(|x| x.is_finite())
        .sum()
}

fn weighted_mean(values: &[(f64, f64)]) -> (f64, f64) {
    let (mut sw, mut swx) = (0.0, 0.0);
    for &(x, s) in values {
        let w = 1.0 / (s * s);
        sw += w;
        swx += w * x;
    }
    (swx / sw, 1.0 / sw.sqrt())
}

/// Fit every curve, assign detuning signs jointly, and pool the tone.
///
/// The survival curve depends on `Δ` only through `Δ²`, so the sign of each
/// detuning is chosen across curves: the tone frequency `c` minimizing
/// `Σ_i min_± (Ω_i ± |Δ_i| − c)²/σ_i²` is found among all candidates and every
/// curve takes the sign closest to it.
pub fn fit_lln(curves: &[DecayCurve], opts: &LlnFitOptions) -> Result<LlnFitReport> {
    if curves.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "LLN fitting needs at least 3 curves, got {}",
            curves.len()
        )));
    }
    let raw: Vec<RawFit> = curves
        .iter()
        .map(|c| fit_single(c, opts))
        .collect::<Result<_>>()?;
    let mut fits: Vec<LlnCurveFit> = curves
        .iter()
        .zip(&raw)
        .map(|(c, r)| curve_fit_summary(c, r, opts))
        .collect();

    let usable: Vec<usize> = (0..fits.len())
        .filter(|&i| fits[i].excluded.is_none() && fits[i].delta_sigma.is_finite() && fits[i].delta_sigma > 0.0)
        .collect();
    if usable.is_empty() {
        return Err(Error::FitFailed("every curve failed the fit-quality gate".into()));
    }

    let cost_at = |c: f64| -> f64 {
        usable
            .iter()
            .map(|&i| {
                let f = &fits[i];
                let a = (f.omega + f.delta - c).powi(2);
                let b = (f.omega - f.delta - c).powi(2);
                a.min(b) / (f.delta_sigma * f.delta_sigma)
            })
            .sum()
    };
    let center = usable
        .iter()
        .flat_map(|&i| [fits[i].omega + fits[i].delta, fits[i].omega - fits[i].delta])
        .map(|c| (c, cost_at(c)))
        .fold((0.0, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best })
        .0;
    for f in fits.iter_mut() {
        let plus = f.omega + f.delta;
        let minus = f.omega - f.delta;
        if (minus - center).abs() < (plus - center).abs() {
            f.delta = -f.delta;
        }
        let bare = f.omega + f.delta;
        f.bloch_siegert_shift = if opts.bloch_siegert && bare > 0.0 {
            f.omega_lln * f.omega_lln / (4.0 * bare)
        } else {
            0.0
        };
        f.spectator_shift = spectator_shift(&opts.spectators, f.omega);
        f.omega0 = bare + f.bloch_siegert_shift + f.spectator_shift;
    }

    let (omega0, omega0_sigma) = weighted_mean(
        &usable
            .iter()
            .map(|&i| (fits[i].omega0, fits[i].delta_sigma))
            .collect::<Vec<_>>(),
    );
    let lln_pts: Vec<(f64, f64)> = usable
        .iter()
        .filter(|&&i| fits[i].omega_lln_sigma.is_finite() && fits[i].omega_lln_sigma > 0.0)
        .map(|&i| (fits[i].omega_lln, fits[i].omega_lln_sigma))
        .collect();
    if lln_pts.is_empty() {
        return Err(Error::FitFailed("no curve constrains the tone strength".into()));
    }
    let (omega_lln, omega_lln_sigma) = weighted_mean(&lln_pts);
    let excluded = (0..fits.len()).filter(|i| fits[*i].excluded.is_some()).collect();
    let tone = LlnTone::new(omega0, omega_lln, 0.0);
    Ok(LlnFitReport {
        omega0,
        omega0_sigma,
        omega_lln,
        omega_lln_sigma,
        strengths: ToneStrengths::from(&tone),
        curves: fits,
        excluded,
    })
}
