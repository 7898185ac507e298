use noisespec_core::lln::{dressed_rates, fit_lln, lln_decay_model, spectator_shift, LlnFitOptions};
use noisespec_core::psd::linspace;
use noisespec_core::qubit::{monte_carlo_decay, DriveConfig, FrameKind, McConfig};
use noisespec_core::{DecayCurve, LlnTone, PsdModel};
use proptest::prelude::*;
use std::f64::consts::PI;

const KHZ: f64 = 2.0 * PI * 1e3;

fn closed_form_curves(tone: &LlnTone, gamma1: f64, gamma_phi: f64, offsets_khz: &[f64]) -> Vec<DecayCurve> {
    let times = linspace(0.0, 1.2e-3, 61);
    offsets_khz
        .iter()
        .map(|off| {
            let omega = tone.omega0 + off * KHZ;
            let rates = dressed_rates(gamma1, gamma_phi, 0.0, tone.omega_lln, tone.omega0 - omega).unwrap();
            let p = lln_decay_model(tone, omega, &rates, &times);
            DecayCurve::new(omega, times.clone(), p, vec![1e-3; times.len()]).unwrap()
        })
        .collect()
}

#[test]
fn noiseless_curves_return_the_planted_tone() {
    let tone = LlnTone::new(81.832 * KHZ, 2.842 * KHZ, 0.0);
    let curves = closed_form_curves(&tone, 150.0, 40.0, &[-4.0, -2.5, -1.0, 0.5, 2.0, 3.5]);
    let opts = LlnFitOptions {
        bloch_siegert: false,
        ..LlnFitOptions::default()
    };
    let fit = fit_lln(&curves, &opts).unwrap();
    assert!(((fit.omega0 - tone.omega0) / tone.omega0).abs() < 1e-9, "ω₀ {} vs {}", fit.omega0, tone.omega0);
    assert!(((fit.omega_lln - tone.omega_lln) / tone.omega_lln).abs() < 1e-9, "Ω_LLN {} vs {}", fit.omega_lln, tone.omega_lln);
    for c in &fit.curves {
        assert!((c.gamma1 - 150.0).abs() < 1e-6, "Γ₁ {}", c.gamma1);
        assert!((c.gamma_phi - 40.0).abs() < 1e-6, "Γ_φ {}", c.gamma_phi);
        // Background level reported as 2Γ₁.
        assert!((c.s_omega - 300.0).abs() < 1e-5);
    }
}

#[test]
fn detuning_sign_is_resolved_on_one_sided_scans() {
    let tone = LlnTone::new(60.0 * KHZ, 2.0 * KHZ, 0.0);
    let opts = LlnFitOptions {
        bloch_siegert: false,
        ..LlnFitOptions::default()
    };
    for offsets in [[-3.0, -2.0, -1.2], [1.2, 2.0, 3.0]] {
        let fit = fit_lln(&closed_form_curves(&tone, 80.0, 10.0, &offsets), &opts).unwrap();
        assert!((fit.omega0 - tone.omega0).abs() < 1e-6 * tone.omega0, "{offsets:?}: {}", fit.omega0);
    }
}

#[test]
fn monte_carlo_curves_recover_the_tone_within_three_sigma() {
    let tone = LlnTone::new(81.832 * KHZ, 2.842 * KHZ, 0.0);
    let psd = PsdModel::flat(300.0).with_tones(vec![tone]).unwrap();
    let times = linspace(0.0, 1.2e-3, 61);
    let curves: Vec<DecayCurve> = [-5.0, -3.5, -2.0, -0.8, 0.8, 2.0, 3.5, 5.0]
        .iter()
        .enumerate()
        .map(|(i, off)| {
            let cfg = McConfig::new(150, 9000 + 131 * i as u64).with_frame(FrameKind::LlnInteraction).with_shots(200);
            monte_carlo_decay(&psd, &DriveConfig::new(tone.omega0 + off * KHZ, times.clone()), &cfg).unwrap()
        })
        .collect();
    let fit = fit_lln(&curves, &LlnFitOptions::default()).unwrap();
    assert!((fit.omega0 - tone.omega0).abs() < 3.0 * fit.omega0_sigma, "ω₀ off by {} (σ {})", fit.omega0 - tone.omega0, fit.omega0_sigma);
    assert!(
        (fit.omega_lln - tone.omega_lln).abs() < 3.0 * fit.omega_lln_sigma,
        "Ω_LLN off by {} (σ {})",
        fit.omega_lln - tone.omega_lln,
        fit.omega_lln_sigma
    );
}

#[test]
fn a_second_tone_shift_is_removed_by_the_spectator_correction() {
    let tone = LlnTone::new(60.0 * KHZ, 2.0 * KHZ, 0.0);
    let other = LlnTone::new(75.0 * KHZ, 4.0 * KHZ, 0.0);
    let psd = PsdModel::flat(200.0).with_tones(vec![tone, other]).unwrap();
    let times = linspace(0.0, 1.2e-3, 61);
    let curves: Vec<DecayCurve> = [-4.0, -2.5, -1.0, 1.0, 2.5, 4.0]
        .iter()
        .enumerate()
        .map(|(i, off)| {
            let cfg = McConfig::new(100, 4400 + 17 * i as u64).with_frame(FrameKind::LlnInteraction).with_shots(200);
            monte_carlo_decay(&psd, &DriveConfig::new(tone.omega0 + off * KHZ, times.clone()), &cfg).unwrap()
        })
        .collect();
    let shift = spectator_shift(std::slice::from_ref(&other), tone.omega0);
    assert!(shift < -2.0 * PI * 400.0, "expected a large shift, got {shift}");
    let plain = fit_lln(&curves, &LlnFitOptions::default()).unwrap();
    let opts = LlnFitOptions {
        spectators: vec![other],
        ..LlnFitOptions::default()
    };
    let fit = fit_lln(&curves, &opts).unwrap();
    assert!((plain.omega0 - tone.omega0).abs() > 5.0 * plain.omega0_sigma);
    assert!((fit.omega0 - tone.omega0).abs() < 3.0 * fit.omega0_sigma, "ω₀ off by {} (σ {})", fit.omega0 - tone.omega0, fit.omega0_sigma);
}

#[test]
fn strengths_follow_the_fitted_rabi_frequency() {
    let tone = LlnTone::new(50.0 * KHZ, 1.0 * KHZ, 0.0);
    let fit = fit_lln(&closed_form_curves(&tone, 100.0, 0.0, &[-2.0, 1.0, 2.5]), &LlnFitOptions::default()).unwrap();
    let w = fit.omega_lln;
    assert!((fit.strengths.delta_weight / (2.0 * PI * w * w) - 1.0).abs() < 1e-12);
    assert!((fit.strengths.pi_e0_squared / (4.0 * PI * w * w) - 1.0).abs() < 1e-12);
    assert!((fit.strengths.pi_omega_lln_squared / (PI * w * w) - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn model_starts_at_one(
        g1 in 0.0f64..1e4, gp in 0.0f64..1e4, gv in 0.0f64..1e4,
        w_lln in 0.0f64..1e5, delta in -1e5f64..1e5,
    ) {
        let tone = LlnTone::new(1e6, w_lln, 0.0);
        let rates = dressed_rates(g1, gp, gv, w_lln, delta).unwrap();
        let p = lln_decay_model(&tone, 1e6 - delta, &rates, &[0.0]);
        prop_assert!((p[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn model_stays_inside_its_envelope(
        g1 in 0.0f64..1e4, gp in 0.0f64..1e4, gv in 0.0f64..1e4,
        w_lln in 1.0f64..1e5, delta in -1e5f64..1e5, t_max in 1e-5f64..1e-2,
    ) {
        let tone = LlnTone::new(1e6, w_lln, 0.0);
        let rates = dressed_rates(g1, gp, gv, w_lln, delta).unwrap();
        let times = linspace(0.0, t_max, 50);
        let p = lln_decay_model(&tone, 1e6 - delta, &rates, &times);
        for (t, p) in times.iter().zip(&p) {
            let env = rates.eta.cos().powi(2) * (-rates.gamma1_t * t).exp() + rates.eta.sin().powi(2) * (-rates.gamma2_t * t).exp();
            prop_assert!(*p >= 0.5 - 0.5 * env - 1e-12 && *p <= 0.5 + 0.5 * env + 1e-12);
        }
    }

    #[test]
    fn dressed_rates_are_linear_and_ordered(
        a in (0.0f64..1e4, 0.0f64..1e4, 0.0f64..1e4),
        b in (0.0f64..1e4, 0.0f64..1e4, 0.0f64..1e4),
        ca in 0.0f64..5.0, cb in 0.0f64..5.0,
        w_lln in 0.0f64..1e5, delta in -1e5f64..1e5,
    ) {
        let ra = dressed_rates(a.0, a.1, a.2, w_lln, delta).unwrap();
        let rb = dressed_rates(b.0, b.1, b.2, w_lln, delta).unwrap();
        let rc = dressed_rates(ca * a.0 + cb * b.0, ca * a.1 + cb * b.1, ca * a.2 + cb * b.2, w_lln, delta).unwrap();
        let tol = 1e-10 * (rc.gamma1_t + rc.gamma2_t + 1.0);
        prop_assert!((rc.gamma1_t - ca * ra.gamma1_t - cb * rb.gamma1_t).abs() < tol);
        prop_assert!((rc.gamma2_t - ca * ra.gamma2_t - cb * rb.gamma2_t).abs() < tol);
        for r in [ra, rb, rc] {
            prop_assert!(r.gamma1_t >= 0.0 && r.gamma2_t >= 0.0);
            prop_assert!(r.gamma2_t >= 0.5 * r.gamma1_t - 1e-12 * r.gamma1_t);
        }
    }
}
