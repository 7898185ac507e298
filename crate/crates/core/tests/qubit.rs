use noisespec_core::lln::{dressed_rates, lln_decay_model};
use noisespec_core::noise::{synthesize, NoiseTrajectory};
use noisespec_core::psd::linspace;
use noisespec_core::qubit::{evolve_one, monte_carlo_decay, DriveConfig, Frame, FrameKind, McConfig};
use noisespec_core::{LlnTone, PsdModel};
use proptest::prelude::*;
use std::f64::consts::PI;

const KHZ: f64 = 2.0 * PI * 1e3;

/// Classical RK4 on `dr/dt = b(t) × r`.
fn rk4_x(b: impl Fn(f64) -> [f64; 3], t_end: f64, steps: usize) -> f64 {
    let cross = |b: [f64; 3], r: [f64; 3]| [b[1] * r[2] - b[2] * r[1], b[2] * r[0] - b[0] * r[2], b[0] * r[1] - b[1] * r[0]];
    let add = |r: [f64; 3], k: [f64; 3], h: f64| [r[0] + h * k[0], r[1] + h * k[1], r[2] + h * k[2]];
    let h = t_end / steps as f64;
    let mut r = [1.0, 0.0, 0.0];
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = cross(b(t), r);
        let k2 = cross(b(t + h / 2.0), add(r, k1, h / 2.0));
        let k3 = cross(b(t + h / 2.0), add(r, k2, h / 2.0));
        let k4 = cross(b(t + h), add(r, k3, h));
        r = std::array::from_fn(|j| r[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
    }
    r[0]
}

#[test]
fn static_offset_matches_fine_reference_and_perturbation_theory() {
    let omega = 50.0 * KHZ;
    let f0 = 0.05 * omega;
    let dt = 2.0 * PI / (64.0 * omega);
    let times: Vec<f64> = (1..=40).map(|k| k as f64 * 7.0 * dt).collect();
    let n = (times.last().unwrap() / dt).ceil() as usize + 2;
    let noise = NoiseTrajectory::constant(dt, n, f0).unwrap();
    let states = evolve_one(&noise, None, &DriveConfig::new(omega, times.clone()), &Frame::Rotating).unwrap();
    for (s, &t) in states.iter().zip(&times) {
        let reference = rk4_x(|u| [0.0, f0 * (omega * u).sin(), f0 * (omega * u).cos()], t, 20_000);
        let perturbative = 1.0 - 2.0 * (f0 / omega).powi(2) * (0.5 * omega * t).sin().powi(2);
        assert!((s.x - reference).abs() < 1e-4, "t = {t}: {} vs {reference}", s.x);
        assert!((s.x - perturbative).abs() < 1e-4, "t = {t}: {} vs {perturbative}", s.x);
    }
}

fn smooth_noise(t: f64) -> f64 {
    let comps = [(0.8, 48.0, 0.3), (0.5, 51.5, 1.7), (0.3, 12.0, 2.9), (0.4, 3.0, 0.1)];
    comps.iter().map(|(a, w, p)| a * 6e3 * (w * KHZ * t + p).cos()).sum()
}

#[test]
fn halving_the_step_shifts_survival_below_1e_3() {
    let omega = 50.0 * KHZ;
    let times = linspace(0.0, 2e-3, 41);
    let drive = DriveConfig::new(omega, times.clone());
    let run = |ppp: f64| {
        let dt = 2.0 * PI / (ppp * omega);
        let n = (2e-3 / dt).ceil() as usize + 2;
        let samples = (0..n).map(|k| smooth_noise(k as f64 * dt)).collect();
        let noise = NoiseTrajectory::new(dt, samples, 0).unwrap();
        evolve_one(&noise, None, &drive, &Frame::Rotating).unwrap()
    };
    let coarse = run(32.0);
    let fine = run(64.0);
    let mut moved = 0.0f64;
    for (a, b) in coarse.iter().zip(&fine) {
        assert!((a.survival() - b.survival()).abs() < 1e-3, "{} vs {}", a.survival(), b.survival());
        moved = moved.max((1.0 - a.survival()).abs());
    }
    // The scenario must actually decohere for the comparison to mean anything.
    assert!(moved > 0.05, "max deviation from one {moved}");
}

#[test]
fn rotating_and_tone_frames_agree_statistically() {
    let tone = LlnTone::new(60.0 * KHZ, 1.5 * KHZ, 0.0);
    let smooth = PsdModel::from_fn(linspace(0.0, 100.0 * KHZ, 101), |w| 200.0 + 800.0 / (1.0 + (w / (5.0 * KHZ)).powi(2))).unwrap();
    let psd = smooth.with_tones(vec![tone]).unwrap();
    let times = linspace(0.0, 8e-4, 17);
    let drive = DriveConfig::new(61.0 * KHZ, times);
    let a = monte_carlo_decay(&psd, &drive, &McConfig::new(400, 1)).unwrap();
    let b = monte_carlo_decay(&psd, &drive, &McConfig::new(400, 50_000).with_frame(FrameKind::LlnInteraction)).unwrap();
    for j in 0..a.len() {
        let sigma = a.stderr[j].hypot(b.stderr[j]);
        assert!((a.p_s[j] - b.p_s[j]).abs() <= 3.0 * sigma + 1e-12, "t = {}: {} vs {}", a.times[j], a.p_s[j], b.p_s[j]);
    }
}

#[test]
fn resonant_tone_gives_undamped_rabi_flopping() {
    let tone = LlnTone::new(81.832 * KHZ, 2.842 * KHZ, 0.0);
    let psd = PsdModel::zero().with_tones(vec![tone]).unwrap();
    let times = linspace(0.0, 4e-4, 41);
    let mc = monte_carlo_decay(
        &psd,
        &DriveConfig::new(tone.omega0, times.clone()),
        &McConfig::new(50, 8).with_frame(FrameKind::LlnInteraction),
    )
    .unwrap();
    let rates = dressed_rates(0.0, 0.0, 0.0, tone.omega_lln, 0.0).unwrap();
    let model = lln_decay_model(&tone, tone.omega0, &rates, &times);
    for j in 0..times.len() {
        // Counter-rotating terms contribute ripples of order Ω_LLN/ω₀.
        assert!((mc.p_s[j] - model[j]).abs() < 0.05, "t = {}: {} vs {}", times[j], mc.p_s[j], model[j]);
    }
    assert!(mc.p_s.iter().copied().fold(1.0, f64::min) < 0.05);
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let psd = PsdModel::flat(1500.0);
    let drive = DriveConfig::new(20.0 * KHZ, linspace(0.0, 1e-3, 11));
    let cfg = McConfig::new(64, 77).with_shots(100);
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| monte_carlo_decay(&psd, &drive, &cfg).unwrap());
    let b = wide.install(|| monte_carlo_decay(&psd, &drive, &cfg).unwrap());
    assert_eq!(a.p_s, b.p_s);
    assert_eq!(a.stderr, b.stderr);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_step_preserves_the_bloch_norm(
        level in 0.0f64..1e6,
        omega_khz in 5.0f64..200.0,
        seed in any::<u64>(),
        tone in prop::option::of((5.0f64..200.0, 0.1f64..20.0, 0.0f64..std::f64::consts::TAU)),
        stark in -1e4f64..1e4,
    ) {
        let omega = omega_khz * KHZ;
        let psd = PsdModel::from_fn(linspace(0.0, 200.0 * KHZ, 9), |_| level).unwrap();
        let fastest = omega.max(200.0 * KHZ).max(tone.map(|t| t.0 * KHZ).unwrap_or(0.0));
        let dt = 2.0 * PI / (24.0 * fastest);
        let times = linspace(0.0, 300.0 * dt, 61);
        let noise = synthesize(&psd, dt, 512, seed).unwrap();
        let frame = match tone {
            Some((f, r, p)) => Frame::LlnInteraction { tones: vec![LlnTone::new(f * KHZ, r * KHZ, p)] },
            None => Frame::Rotating,
        };
        let drive = DriveConfig::new(omega, times).with_stark_shift(stark);
        for s in evolve_one(&noise, None, &drive, &frame).unwrap() {
            prop_assert!((s.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn survival_and_stderr_are_well_formed(level in 0.0f64..5e4, seed in any::<u64>(), shots in prop::option::of(1u32..500)) {
        let psd = PsdModel::flat(level);
        let mut cfg = McConfig::new(8, seed);
        cfg.shots = shots;
        let c = monte_carlo_decay(&psd, &DriveConfig::new(30.0 * KHZ, linspace(0.0, 5e-4, 6)), &cfg).unwrap();
        prop_assert!(c.p_s.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(c.stderr.iter().all(|s| *s >= 0.0));
        prop_assert_eq!(c.p_s.len(), c.times.len());
    }
}
