use noisespec_core::noise::{autocorrelation, mix_seed, synthesize, synthesize_with, TonePhase, WelchAccumulator};
use noisespec_core::psd::linspace;
use noisespec_core::{LlnTone, PsdModel};
use proptest::prelude::*;
use std::f64::consts::PI;

fn smooth_psd() -> PsdModel {
    let k = 2.0 * PI * 1e3;
    PsdModel::from_fn(linspace(0.0, 200.0 * k, 801), |w| {
        500.0 + 4000.0 / (1.0 + ((w - 40.0 * k) / (5.0 * k)).powi(2)) + 3000.0 / (1.0 + (w / (8.0 * k)).powi(2))
    })
    .unwrap()
}

#[test]
fn welch_round_trip_recovers_smooth_spectrum() {
    let psd = smooth_psd();
    let dt = PI / psd.max_omega();
    let seg = 256;
    let mut acc = WelchAccumulator::new(seg, dt).unwrap();
    for k in 0..200u64 {
        acc.add(&synthesize(&psd, dt, 2048, mix_seed(k)).unwrap()).unwrap();
    }
    let est = acc.finish().unwrap();
    let dw = est.grid()[1];
    // Band-averaged comparison over windows of eight Welch bins.
    let hi = 0.9 * psd.max_omega();
    let mut lo = 2.0 * dw;
    while lo + 8.0 * dw < hi {
        let a = est.band_power(lo, lo + 8.0 * dw);
        let b = psd.band_power(lo, lo + 8.0 * dw);
        assert!((a / b - 1.0).abs() < 0.1, "band at {lo}: {a} vs {b}");
        lo += 8.0 * dw;
    }
}

#[test]
fn smooth_samples_are_gaussian() {
    let psd = smooth_psd();
    let dt = PI / psd.max_omega();
    let tr = synthesize(&psd, dt, 1 << 20, 99).unwrap();
    let x = tr.samples();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let excess = m4 / (m2 * m2) - 3.0;
    assert!(excess.abs() < 0.1, "excess kurtosis {excess}");
}

#[test]
fn variance_matches_one_sided_integral() {
    let psd = smooth_psd();
    let dt = PI / psd.max_omega();
    let expected = psd.band_power(0.0, psd.max_omega());
    let mut total = 0.0;
    let n = 64;
    for k in 0..n {
        total += synthesize(&psd, dt, 4096, 1000 + k).unwrap().mean_square();
    }
    let got = total / n as f64;
    assert!((got / expected - 1.0).abs() < 0.05, "{got} vs {expected}");
}

#[test]
fn fixed_phase_tone_autocorrelation_is_a_cosine() {
    let tone = LlnTone::new(2.0 * PI * 81_832.0, 2.0 * PI * 2_842.0, 0.0);
    let psd = PsdModel::zero().with_tones(vec![tone]).unwrap();
    let dt = 2.0 * PI / (40.0 * tone.omega0);
    let n = 1 << 16;
    let tr = synthesize_with(&psd, dt, n, 5, TonePhase::Fixed).unwrap();
    // Power E₀²/2 with E₀ = 2Ω_LLN.
    let e0 = 2.0 * tone.omega_lln;
    assert!((tr.mean_square() / (0.5 * e0 * e0) - 1.0).abs() < 1e-3);
    let lags = 200;
    let c = autocorrelation(&tr, lags).unwrap();
    for (k, ck) in c.iter().enumerate() {
        let tau = k as f64 * dt;
        // Biased estimator: weight (N − k)/N.
        let expect = 0.5 * e0 * e0 * (tone.omega0 * tau).cos() * (n - k) as f64 / n as f64;
        assert!((ck - expect).abs() < 2e-3 * 0.5 * e0 * e0, "lag {k}: {ck} vs {expect}");
    }
}

#[test]
fn random_phase_tone_has_the_same_power() {
    let tone = LlnTone::new(2.0 * PI * 50e3, 2.0 * PI * 1e3, 0.0);
    let psd = PsdModel::zero().with_tones(vec![tone]).unwrap();
    let dt = 2.0 * PI / (40.0 * tone.omega0);
    let e0 = 2.0 * tone.omega_lln;
    for seed in 0..8 {
        let tr = synthesize(&psd, dt, 1 << 14, seed).unwrap();
        assert!((tr.mean_square() / (0.5 * e0 * e0) - 1.0).abs() < 1e-2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthesis_is_bit_identical_for_equal_inputs(seed in any::<u64>(), level in 1.0f64..1e4, log_n in 4u32..12) {
        let psd = PsdModel::flat(level);
        let n = 1usize << log_n;
        let a = synthesize(&psd, 1e-6, n, seed).unwrap();
        let b = synthesize(&psd, 1e-6, n, seed).unwrap();
        prop_assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn different_seeds_give_different_trajectories(seed in any::<u64>()) {
        let psd = PsdModel::flat(100.0);
        let a = synthesize(&psd, 1e-6, 256, seed).unwrap();
        let b = synthesize(&psd, 1e-6, 256, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a.samples(), b.samples());
    }
}
