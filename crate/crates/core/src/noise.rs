//! Gaussian noise synthesis from a [`PsdModel`] and the spectral estimators
//! used to check it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::psd::PsdModel;

/// One sampled realization `f(t_k)`, `t_k = k·dt`, in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrajectory {
    dt: f64,
    samples: Vec<f64>,
    seed: u64,
}

impl NoiseTrajectory {
    pub fn new(dt: f64, samples: Vec<f64>, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("a trajectory needs at least 2 samples".into()));
        }
        Ok(Self { dt, samples, seed })
    }

    /// Constant `f(t) = value`.
    pub fn constant(dt: f64, n: usize, value: f64) -> Result<Self> {
        Self::new(dt, vec![value; n], 0)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time span covered with each sample held for one `dt`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    pub fn mean_square(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.len() as f64
    }

    pub fn truncated(mut self, n: usize) -> Result<Self> {
        if n < 2 || n > self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate {} samples to {n}",
                self.samples.len()
            )));
        }
        self.samples.truncate(n);
        Ok(self)
    }

    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self { samples, ..*self }
    }
}

/// How tone phases are chosen during synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TonePhase {
    /// `φ₀` uniform in `[0, 2π)` per trajectory from the seed stream.
    #[default]
    Random,
    /// Use each tone's stored `phi0`.
    Fixed,
}

/// SplitMix64 finalizer; decorrelates neighbouring seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn synthesize(psd: &PsdModel, dt: f64, n: usize, seed: u64) -> Result<NoiseTrajectory> {
    synthesize_with(psd, dt, n, seed, TonePhase::Random)
}

/// Spectral-method synthesis: independent complex Gaussian amplitudes per
/// FFT bin with `E|A_m|² = S(ω_m)/(n·dt)`, Hermitian symmetry, inverse FFT.
/// Tones are added as `E₀ cos(ω₀ t + φ₀)` with `E₀ = 2 Ω_LLN`.
pub fn synthesize_with(
    psd: &PsdModel,
    dt: f64,
    n: usize,
    seed: u64,
    phase: TonePhase,
) -> Result<NoiseTrajectory> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    if !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("n must be a power of two, got {n}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let span = n as f64 * dt;
    let dw = 2.0 * PI / span;
    let half = n / 2;
    for m in 0..=half {
        let s = psd.eval(m as f64 * dw);
        let var = s / span;
        if m == 0 || m == half {
            let g: f64 = rng.sample(StandardNormal);
            spectrum[m] = Complex64::new(g * var.sqrt(), 0.0);
        } else {
            let sd = (0.5 * var).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            spectrum[m] = Complex64::new(re * sd, im * sd);
            spectrum[n - m] = spectrum[m].conj();
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let mut samples: Vec<f64> = spectrum.iter().map(|c| c.re).collect();

    for tone in psd.tones() {
        let phi0 = match phase {
            TonePhase::Random => rng.random_range(0.0..2.0 * PI),
            TonePhase::Fixed => tone.phi0,
        };
        let e0 = tone.amplitude();
        for (k, x) in samples.iter_mut().enumerate() {
            *x += e0 * (tone.omega0 * k as f64 * dt + phi0).cos();
        }
    }
    NoiseTrajectory::new(dt, samples, seed)
}

/// Welch estimate (Hann window, 50% overlap) on the grid
/// `ω_m = 2πm/(L·dt)`, `m = 0..=L/2`. White noise of variance `σ²` comes
/// back flat at `σ²·dt`.
pub fn estimate_psd(traj: &NoiseTrajectory, segment_len: usize) -> Result<PsdModel> {
    let mut acc = WelchAccumulator::new(segment_len, traj.dt())?;
    acc.add(traj)?;
    acc.finish()
}

/// Running Welch average across several trajectories with one spacing.
pub struct WelchAccumulator {
    segment_len: usize,
    dt: f64,
    window: Vec<f64>,
    window_power: f64,
    sum: Vec<f64>,
    segments: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl WelchAccumulator {
    pub fn new(segment_len: usize, dt: f64) -> Result<Self> {
        if segment_len < 4 {
            return Err(Error::InvalidArgument(format!(
                "segment_len must be >= 4, got {segment_len}"
            )));
        }
        let window: Vec<f64> = (0..segment_len)
            .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / segment_len as f64).cos())
            .collect();
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
        Ok(Self {
            segment_len,
            dt,
            window,
            window_power,
            sum: vec![0.0; segment_len / 2 + 1],
            segments: 0,
            fft,
        })
    }

    pub fn add(&mut self, traj: &NoiseTrajectory) -> Result<()> {
        let len = self.segment_len;
        if len > traj.len() {
            return Err(Error::InvalidArgument(format!(
                "segment_len {len} exceeds trajectory length {}",
                traj.len()
            )));
        }
        if (traj.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidArgument("trajectories have different dt".into()));
        }
        let hop = (len / 2).max(1);
        let x = traj.samples();
        let scale = self.dt / self.window_power;
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let mut start = 0;
        while start + len <= x.len() {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(x[start + k] * self.window[k], 0.0);
            }
            self.fft.process(&mut buf);
            for (m, s) in self.sum.iter_mut().enumerate() {
                *s += buf[m].norm_sqr() * scale;
            }
            self.segments += 1;
            start += hop;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<PsdModel> {
        let segs = self.segments.max(1) as f64;
        let dw = 2.0 * PI / (self.segment_len as f64 * self.dt);
        let grid = (0..self.sum.len()).map(|m| m as f64 * dw).collect();
        let values = self.sum.iter().map(|s| s / segs).collect();
        PsdModel::new(grid, values)
    }
}

/// Biased autocorrelation `C(k) = (1/N) Σ_j f_j f_{j+k}` for
/// `k = 0..=max_lag`.
pub fn autocorrelation(traj: &NoiseTrajectory, max_lag: usize) -> Result<Vec<f64>> {
    let n = traj.len();
    if max_lag >= n {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} must be below trajectory length {n}"
        )));
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = traj
        .samples()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let norm = 1.0 / (size as f64 * n as f64);
    Ok(buf[..=max_lag].iter().map(|c| c.re * norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lln::LlnTone;

    #[test]
    fn zero_spectrum_gives_zero_samples() {
        let t = synthesize(&PsdModel::zero(), 1e-6, 1024, 99).unwrap();
        assert!(t.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fixed_phase_tone_is_exact_cosine() {
        let tone = LlnTone::new(2.0 * PI * 12_345.0, 700.0, 0.0);
        let psd = PsdModel::zero().with_tones(vec![tone]).unwrap();
        let dt = 1e-6;
        let t = synthesize_with(&psd, dt, 4096, 1, TonePhase::Fixed).unwrap();
        for (k, &x) in t.samples().iter().enumerate() {
            let want = 1400.0 * (tone.omega0 * k as f64 * dt).cos();
            assert!((x - want).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn argument_validation() {
        let p = PsdModel::flat(1.0);
        assert!(synthesize(&p, 1e-6, 1, 0).is_err());
        assert!(synthesize(&p, 1e-6, 1000, 0).is_err());
        assert!(synthesize(&p, 0.0, 1024, 0).is_err());
        let t = synthesize(&p, 1e-6, 64, 0).unwrap();
        assert!(estimate_psd(&t, 3).is_err());
        assert!(estimate_psd(&t, 128).is_err());
        assert!(autocorrelation(&t, 64).is_err());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let p = PsdModel::new(vec![0.0, 1e4, 1e5], vec![5.0, 1.0, 0.2]).unwrap();
        let a = synthesize(&p, 2e-6, 2048, 42).unwrap();
        let b = synthesize(&p, 2e-6, 2048, 42).unwrap();
        let c = synthesize(&p, 2e-6, 2048, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn white_variance_matches_level() {
        // S_w = σ² dt
        let dt = 1e-6;
        let s_w = 3.0;
        let t = synthesize(&PsdModel::flat(s_w), dt, 1 << 18, 5).unwrap();
        let var = t.mean_square();
        assert!((var / (s_w / dt) - 1.0).abs() < 0.01, "var ratio {}", var / (s_w / dt));
    }

    #[test]
    fn zero_trajectory_estimates() {
        let t = NoiseTrajectory::new(1e-3, vec![0.0; 256], 0).unwrap();
        let p = estimate_psd(&t, 64).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
        let c = autocorrelation(&t, 10).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }
}
