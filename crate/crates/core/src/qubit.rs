//! Trajectory-by-trajectory Bloch dynamics of the driven qubit.
//!
//! Two equivalent pictures are supported:
//!
//! * `Rotating`: interaction picture of the drive, field
//!   `b = (δΩ, f sin Ωt, f cos Ωt)`; the noise trajectory carries any tones.
//! * `LlnInteraction`: drive explicit, field
//!   `b = (Ω + δΩ, 0, f′ + Σ 2Ω_LLN cos(ω₀t + φ₀))` with the tones added
//!   analytically.
//!
//! States are reported in the coordinates of the second picture, then turned
//! about z by `δ_A t` so that the x component is the projection on the
//! Stark-rotated readout axis. The Hamiltonian is held constant over each
//! step and every step is an exact rotation, so norms are preserved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::curve::DecayCurve;
use crate::error::{Error, Result};
use crate::lln::LlnTone;
use crate::noise::{mix_seed, synthesize, NoiseTrajectory};
use crate::psd::PsdModel;

/// Coarsest allowed sampling: this many samples per period of the fastest
/// relevant frequency.
pub const MIN_POINTS_PER_PERIOD: f64 = 20.0;
pub const DEFAULT_POINTS_PER_PERIOD: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Rabi frequency Ω (rad/s).
    pub omega: f64,
    /// AC-Stark shift difference δ_A (rad/s).
    #[serde(default)]
    pub stark_shift: f64,
    /// Spectrum of drive-amplitude noise δΩ(t) along x.
    #[serde(default)]
    pub drive_noise: Option<PsdModel>,
    /// Evolution times (s), ascending.
    pub times: Vec<f64>,
}

impl DriveConfig {
    pub fn new(omega: f64, times: Vec<f64>) -> Self {
        Self {
            omega,
            stark_shift: 0.0,
            drive_noise: None,
            times,
        }
    }

    pub fn with_stark_shift(mut self, delta_a: f64) -> Self {
        self.stark_shift = delta_a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega must be positive, got {}", self.omega)));
        }
        if !self.stark_shift.is_finite() {
            return Err(Error::InvalidArgument("stark_shift must be finite".into()));
        }
        if self.times.is_empty() {
            return Err(Error::InvalidArgument("no evolution times".into()));
        }
        if self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidArgument("times must be finite and non-negative".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be strictly ascending".into()));
        }
        Ok(())
    }

    fn t_last(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub const PLUS_X: Self = Self { x: 1.0, y: 0.0, z: 0.0 };

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Rotation by `|b|·tau` about `b` (right-handed): the exact solution of
    /// `dr/dt = b × r` for constant `b`.
    pub fn rotated(&self, b: [f64; 3], tau: f64) -> Self {
        let mag = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        let theta = mag * tau;
        if theta == 0.0 {
            return *self;
        }
        let k = [b[0] / mag, b[1] / mag, b[2] / mag];
        let (s, c) = theta.sin_cos();
        let r = [self.x, self.y, self.z];
        let kxr = [
            k[1] * r[2] - k[2] * r[1],
            k[2] * r[0] - k[0] * r[2],
            k[0] * r[1] - k[1] * r[0],
        ];
        let kdr = k[0] * r[0] + k[1] * r[1] + k[2] * r[2];
        let out: [f64; 3] = std::array::from_fn(|i| r[i] * c + kxr[i] * s + k[i] * kdr * (1.0 - c));
        Self { x: out[0], y: out[1], z: out[2] }
    }

    fn rotated_x(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: self.x, y: c * self.y - s * self.z, z: s * self.y + c * self.z }
    }

    fn rotated_z(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c * self.x - s * self.y, y: s * self.x + c * self.y, z: self.z }
    }

    /// Survival probability on +X.
    pub fn survival(&self) -> f64 {
        0.5 * (1.0 + self.x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frame {
    Rotating,
    LlnInteraction { tones: Vec<LlnTone> },
}

/// Frame selector for Monte-Carlo runs; tones come from the PSD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    #[default]
    Rotating,
    LlnInteraction,
}

fn check_sampling(dt: f64, omega: f64, reason: &str) -> Result<()> {
    if omega <= 0.0 {
        return Ok(());
    }
    let limit = 2.0 * PI / (MIN_POINTS_PER_PERIOD * omega);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Undersampled {
            dt,
            limit,
            reason: reason.to_string(),
        });
    }
    Ok(())
}

/// Evolve +X under one noise realization and return the states at
/// `drive.times`.
///
/// `noise` is `f(t)` for the rotating frame and the smooth part `f′(t)` for
/// the LLN frame; `drive_noise` is `δΩ(t)` on the same time grid.
pub fn evolve_one(
    noise: &NoiseTrajectory,
    drive_noise: Option<&NoiseTrajectory>,
    drive: &DriveConfig,
    frame: &Frame,
) -> Result<Vec<BlochState>> {
    drive.validate()?;
    let dt = noise.dt();
    check_sampling(dt, drive.omega, "drive frequency")?;
    if let Frame::LlnInteraction { tones } = frame {
        for tone in tones {
            tone.validate()?;
            check_sampling(dt, tone.omega0, "tone frequency")?;
        }
    }
    let t_last = drive.t_last();
    let covered = (noise.len() - 1) as f64 * dt;
    if covered < t_last * (1.0 - 1e-12) {
        return Err(Error::TrajectoryTooShort { covered, needed: t_last });
    }
    if let Some(dn) = drive_noise {
        if (dn.dt() - dt).abs() > 1e-12 * dt {
            return Err(Error::InvalidArgument("drive noise uses a different dt".into()));
        }
        let dn_cov = (dn.len() - 1) as f64 * dt;
        if dn_cov < t_last * (1.0 - 1e-12) {
            return Err(Error::TrajectoryTooShort { covered: dn_cov, needed: t_last });
        }
    }

    let f = noise.samples();
    let dn = drive_noise.map(|d| d.samples());
    let omega = drive.omega;
    // Sample k is held over [t_k, t_k + dt]. In the rotating frame the
    // drive phase is taken at the same instant as the sample, which makes
    // the step a midpoint rule for the field shifted by dt/2.
    let field = |k: usize| -> [f64; 3] {
        let dom = dn.map(|d| d[k]).unwrap_or(0.0);
        match frame {
            Frame::Rotating => {
                let (s, c) = (omega * k as f64 * dt).sin_cos();
                [dom, f[k] * s, f[k] * c]
            }
            Frame::LlnInteraction { tones } => {
                let t_mid = (k as f64 + 0.5) * dt;
                let tz: f64 = tones
                    .iter()
                    .map(|tn| tn.amplitude() * (tn.omega0 * t_mid + tn.phi0).cos())
                    .sum();
                [omega + dom, 0.0, f[k] + tz]
            }
        }
    };

    let readout = |state: BlochState, t: f64| -> BlochState {
        let s = match frame {
            Frame::Rotating => state.rotated_x(omega * t),
            Frame::LlnInteraction { .. } => state,
        };
        s.rotated_z(-drive.stark_shift * t)
    };

    let mut out = Vec::with_capacity(drive.times.len());
    let mut state = BlochState::PLUS_X;
    let mut next = 0;
    let mut k = 0usize;
    while next < drive.times.len() {
        let t0 = k as f64 * dt;
        let t1 = t0 + dt;
        let b = field(k);
        while next < drive.times.len() && drive.times[next] <= t1 {
            let t = drive.times[next];
            let partial = state.rotated(b, (t - t0).max(0.0));
            out.push(readout(partial, t));
            next += 1;
        }
        if next == drive.times.len() {
            break;
        }
        state = state.rotated(b, dt);
        k += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_traj: usize,
    pub seed: u64,
    /// Projective shots per time point; `None` reports the ensemble mean.
    #[serde(default)]
    pub shots: Option<u32>,
    #[serde(default = "default_ppp")]
    pub points_per_period: f64,
    #[serde(default)]
    pub frame: FrameKind,
}

fn default_ppp() -> f64 {
    DEFAULT_POINTS_PER_PERIOD
}

impl McConfig {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        Self {
            n_traj,
            seed,
            shots: None,
            points_per_period: DEFAULT_POINTS_PER_PERIOD,
            frame: FrameKind::Rotating,
        }
    }

    pub fn with_shots(mut self, shots: u32) -> Self {
        self.shots = Some(shots);
        self
    }

    pub fn with_frame(mut self, frame: FrameKind) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_points_per_period(mut self, ppp: f64) -> Self {
        self.points_per_period = ppp;
        self
    }
}

/// Step used for a Monte-Carlo run: `ppp` samples per period of the fastest
/// of Ω, the PSD's structure and any tone.
pub fn step_size(psd: &PsdModel, drive: &DriveConfig, ppp: f64) -> f64 {
    let mut w = drive.omega.max(psd.max_omega());
    if let Some(dn) = &drive.drive_noise {
        w = w.max(dn.max_omega());
    }
    2.0 * PI / (ppp * w)
}

/// Ensemble-averaged survival `P_s(t_j)` with its standard error.
///
/// Trajectory `k` uses seed `seed + k`; trajectories run in parallel and are
/// reduced in index order, so results do not depend on thread count.
pub fn monte_carlo_decay(psd: &PsdModel, drive: &DriveConfig, cfg: &McConfig) -> Result<DecayCurve> {
    drive.validate()?;
    if cfg.n_traj < 2 {
        return Err(Error::InvalidArgument(format!("n_traj must be >= 2, got {}", cfg.n_traj)));
    }
    if !(cfg.points_per_period >= MIN_POINTS_PER_PERIOD) {
        return Err(Error::InvalidArgument(format!(
            "points_per_period must be >= {MIN_POINTS_PER_PERIOD}, got {}",
            cfg.points_per_period
        )));
    }
    let dt = step_size(psd, drive, cfg.points_per_period);
    let steps = (drive.t_last() / dt).ceil() as usize + 2;
    let n_synth = (2 * steps).next_power_of_two().max(4);
    let (noise_psd, tones) = match cfg.frame {
        FrameKind::Rotating => (psd.clone(), Vec::new()),
        FrameKind::LlnInteraction => (psd.smooth_part(), psd.tones().to_vec()),
    };

    let run = |k: usize| -> Result<Vec<f64>> {
        let seed = cfg.seed.wrapping_add(k as u64);
        let noise = synthesize(&noise_psd, dt, n_synth, seed)?.truncated(steps)?;
        let dnoise = match &drive.drive_noise {
            Some(p) => Some(synthesize(p, dt, n_synth, mix_seed(seed ^ 0xD81F_7E55))?.truncated(steps)?),
            None => None,
        };
        let frame = match cfg.frame {
            FrameKind::Rotating => Frame::Rotating,
            FrameKind::LlnInteraction => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed));
                Frame::LlnInteraction {
                    tones: tones
                        .iter()
                        .map(|t| LlnTone::new(t.omega0, t.omega_lln, rng.random_range(0.0..2.0 * PI)))
                        .collect(),
                }
            }
        };
        let states = evolve_one(&noise, dnoise.as_ref(), drive, &frame)?;
        Ok(states.iter().map(|s| s.x).collect())
    };
    let xs: Vec<Vec<f64>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(run)
        .collect::<Result<_>>()?;

    let m = drive.times.len();
    let n = cfg.n_traj as f64;
    let mut mean = vec![0.0; m];
    for x in &xs {
        for j in 0..m {
            mean[j] += x[j];
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m];
    for x in &xs {
        for j in 0..m {
            var[j] += (x[j] - mean[j]).powi(2);
        }
    }
    let mut p: Vec<f64> = mean.iter().map(|x| (0.5 * (1.0 + x)).clamp(0.0, 1.0)).collect();
    // Var(P) = Var(x)/4.
    let mut se: Vec<f64> = var.iter().map(|v| (v / (n - 1.0) / n).sqrt() * 0.5).collect();

    if let Some(shots) = cfg.shots {
        if shots == 0 {
            return Err(Error::InvalidArgument("shots must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed ^ 0x5407_5EED));
        let ns = shots as f64;
        for j in 0..m {
            let dist = Binomial::new(shots as u64, p[j])
                .map_err(|e| Error::InvalidArgument(format!("binomial sampling: {e}")))?;
            let k = dist.sample(&mut rng) as f64;
            let pt = (k + 1.0) / (ns + 2.0);
            p[j] = k / ns;
            se[j] = (se[j] * se[j] + pt * (1.0 - pt) / ns).sqrt();
        }
    }

    Ok(DecayCurve {
        omega: drive.omega,
        delta_a: Some(drive.stark_shift),
        times: drive.times.clone(),
        p_s: p,
        stderr: se,
        n_traj: cfg.n_traj,
        seed: Some(cfg.seed),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub omega: f64,
    pub p_s: f64,
    pub stderr: f64,
}

/// Survival at a single time `t` across drive strengths; curve `i` uses seed
/// `mix_seed(seed + i)`.
pub fn omega_scan(
    psd: &PsdModel,
    omegas: &[f64],
    t: f64,
    stark_shift: f64,
    cfg: &McConfig,
) -> Result<Vec<ScanPoint>> {
    omegas
        .iter()
        .enumerate()
        .map(|(i, &omega)| {
            let drive = DriveConfig::new(omega, vec![t]).with_stark_shift(stark_shift);
            let mut c = cfg.clone();
            c.seed = mix_seed(cfg.seed.wrapping_add(i as u64));
            let curve = monte_carlo_decay(psd, &drive, &c)?;
            Ok(ScanPoint {
                omega,
                p_s: curve.p_s[0],
                stderr: curve.stderr[0],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_matches_right_hand_rule() {
        let s = BlochState::PLUS_X.rotated([0.0, 0.0, 1.0], PI / 2.0);
        assert!((s.y - 1.0).abs() < 1e-15 && s.x.abs() < 1e-15);
    }

    #[test]
    fn zero_noise_stays_on_plus_x() {
        let drive = DriveConfig::new(1e5, vec![0.0, 1e-5, 3.3e-5, 1e-4]);
        let dt = 2.0 * PI / (32.0 * 1e5);
        let noise = NoiseTrajectory::constant(dt, 1000, 0.0).unwrap();
        let states = evolve_one(&noise, None, &drive, &Frame::Rotating).unwrap();
        for s in states {
            assert!((s.x - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_stark_precession() {
        let drive = DriveConfig::new(1e5, (0..30).map(|i| i as f64 * 7e-6).collect()).with_stark_shift(2e4);
        let dt = 2.0 * PI / (32.0 * 1e5);
        let noise = NoiseTrajectory::constant(dt, 2000, 0.0).unwrap();
        let frame = Frame::LlnInteraction { tones: vec![LlnTone::new(1e5, 0.0, 0.0)] };
        let states = evolve_one(&noise, None, &drive, &frame).unwrap();
        for (t, s) in drive.times.iter().zip(states) {
            assert!((s.x - (2e4 * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_short_and_coarse_trajectories() {
        let drive = DriveConfig::new(1e5, vec![1e-3]);
        let dt = 2.0 * PI / (32.0 * 1e5);
        let short = NoiseTrajectory::constant(dt, 100, 0.0).unwrap();
        assert!(matches!(
            evolve_one(&short, None, &drive, &Frame::Rotating),
            Err(Error::TrajectoryTooShort { .. })
        ));
        let coarse = NoiseTrajectory::constant(2.0 * PI / (10.0 * 1e5), 10_000, 0.0).unwrap();
        assert!(matches!(
            evolve_one(&coarse, None, &drive, &Frame::Rotating),
            Err(Error::Undersampled { .. })
        ));
    }

    #[test]
    fn zero_psd_monte_carlo_is_one() {
        let drive = DriveConfig::new(2e5, vec![0.0, 1e-4, 2e-4]);
        let c = monte_carlo_decay(&PsdModel::zero(), &drive, &McConfig::new(4, 1)).unwrap();
        assert!(c.p_s.iter().all(|&p| (p - 1.0).abs() < 1e-14));
        assert!(c.stderr.iter().all(|&s| s < 1e-14));
    }
}
