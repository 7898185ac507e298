//! End-to-end closed loop: plant laser and magnetic spectra, simulate two
//! transitions, fit the strong tones, reconstruct both spectra, separate
//! them and predict the beat note, then compare against what was planted.

use serde_json::{json, Value};
use std::f64::consts::PI;

use noisespec_core::beatnote::BeatnoteSpectrum;
use noisespec_core::discriminator::{discriminate_with, recompose};
use noisespec_core::estimator::{band_relative_error, reconstruct};
use noisespec_core::lln::fit_lln;
use noisespec_core::qubit::FrameKind;
use noisespec_core::{LlnTone, PsdModel};

use crate::artifacts::Artifacts;
use crate::commands::{
    band_of, check_transitions, lln_options, run_beatnote, run_decays, run_scan, stage_seed, write_beatnote,
    write_curves, write_discrimination, write_reconstruction, write_tone_report, Ctx,
};
use crate::config::{DecayRuns, PipelineConfig, Values};
use crate::error::{CliError, CliResult};

const TAG_A: u64 = 0x0A0A_0001;
const TAG_B: u64 = 0x0B0B_0002;
const TAG_SCAN: u64 = 0x5343_414E;
const TAG_TONE: u64 = 0x544F_4E45;

fn hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Level (dB relative to the maximum) of the strongest point within
/// `±window` rad/s of `omega`.
fn level_near(s: &BeatnoteSpectrum, omega: f64, window: f64) -> Option<f64> {
    let db = s.db_normalized();
    s.omega
        .iter()
        .zip(db)
        .filter(|(w, _)| (**w - omega).abs() <= window)
        .map(|(_, d)| d)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
}

fn beat_summary(s: &BeatnoteSpectrum, carrier: f64, tones: &[LlnTone]) -> Value {
    let (peak_w, _) = s.peak();
    let step = if s.omega.len() > 1 { s.omega[1] - s.omega[0] } else { 0.0 };
    let sidebands: Vec<Value> = tones
        .iter()
        .map(|t| {
            json!({
                "tone_hz": hz(t.omega0),
                "lower_db": level_near(s, carrier - t.omega0, 3.0 * step),
                "upper_db": level_near(s, carrier + t.omega0, 3.0 * step),
            })
        })
        .collect();
    json!({ "peak_offset_hz": hz(peak_w - carrier), "sidebands": sidebands })
}

pub fn pipeline(ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    let pc: &PipelineConfig = ctx
        .cfg
        .pipeline
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no \"pipeline\" block".into()))?;
    check_transitions(&pc.transition_a, &pc.transition_b)?;

    // Planted spectra.
    let laser = pc.laser.load(&ctx.base)?;
    let magnetic = pc.magnetic.load(&ctx.base)?;
    if !magnetic.tones().is_empty() {
        return Err(CliError::Config("magnetic spectrum cannot carry tones".into()));
    }
    let planted_tones = laser.tones().to_vec();
    let spec_a = recompose(&laser.smooth_part(), &magnetic, &pc.transition_a)?.with_tones(planted_tones.clone())?;
    let spec_b = recompose(&laser.smooth_part(), &magnetic, &pc.transition_b)?.with_tones(planted_tones.clone())?;
    art.psd("pipeline/planted/laser_psd.csv", &laser, json!({ "quantity": "laser frequency noise" }))?;
    art.psd(
        "pipeline/planted/magnetic_psd.csv",
        &magnetic,
        json!({ "quantity": "magnetic field noise", "units": "T^2/Hz" }),
    )?;
    art.psd("pipeline/planted/spectrum_a.csv", &spec_a, json!({ "transition": pc.transition_a }))?;
    art.psd("pipeline/planted/spectrum_b.csv", &spec_b, json!({ "transition": pc.transition_b }))?;

    // Decay curves on both transitions.
    let omegas = pc.decay.omegas_hz.to_angular();
    let meta = json!({ "frame": pc.decay.frame, "shots": pc.decay.shots });
    let curves_a = run_decays(&spec_a, None, &pc.decay, &omegas, stage_seed(ctx.seed, TAG_A))?;
    write_curves(art, "pipeline/curves_a", &curves_a, &meta)?;
    let curves_b = run_decays(&spec_b, None, &pc.decay, &omegas, stage_seed(ctx.seed, TAG_B))?;
    write_curves(art, "pipeline/curves_b", &curves_b, &meta)?;

    if let Some(scan) = &pc.omega_scan {
        let t = run_scan(&spec_a, scan, pc.decay.n_traj, stage_seed(ctx.seed, TAG_SCAN), pc.decay.stark_shift_hz)?;
        art.table("pipeline/omega_scan.csv", t)?;
    }

    // Tone fits from Rabi flopping around each scanned tone.
    let mut scans = Vec::new();
    for (k, ts) in pc.tone_scans.iter().enumerate() {
        let planted = planted_tones.get(ts.tone).ok_or_else(|| {
            CliError::Config(format!("tone_scans[{k}] refers to tone {} but only {} planted", ts.tone, planted_tones.len()))
        })?;
        let runs = DecayRuns {
            omegas_hz: Values::List(ts.offsets_hz.to_vec().iter().map(|o| hz(planted.omega0) + o).collect()),
            times: ts.times.clone(),
            n_traj: ts.n_traj,
            shots: ts.shots,
            stark_shift_hz: 0.0,
            frame: FrameKind::LlnInteraction,
            points_per_period: ts.points_per_period,
        };
        let seed = stage_seed(ctx.seed, TAG_TONE.wrapping_add(k as u64));
        let curves = run_decays(&spec_a, None, &runs, &runs.omegas_hz.to_angular(), seed)?;
        write_curves(art, &format!("pipeline/tones/curves_{k}"), &curves, &json!({ "frame": runs.frame }))?;
        scans.push((planted, curves));
    }
    let first: Vec<LlnTone> = scans
        .iter()
        .map(|(_, c)| Ok(fit_lln(c, &lln_options(pc.bloch_siegert, false, 4.0, Vec::new()))?.tone()))
        .collect::<CliResult<_>>()?;
    // Refit with the other fitted tones as spectators.
    let mut fitted = Vec::new();
    let mut tone_reports = Vec::new();
    for (k, (planted, curves)) in scans.iter().enumerate() {
        let spectators = first.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, t)| *t).collect();
        let fit = fit_lln(curves, &lln_options(pc.bloch_siegert, false, 4.0, spectators))?;
        let body = write_tone_report(art, &format!("pipeline/tones/report_{k}.json"), &fit, Some(planted))?;
        tone_reports.push(json!({
            "planted_freq_hz": hz(planted.omega0),
            "planted_rabi_hz": hz(planted.omega_lln),
            "freq_hz": body["freq_hz"],
            "freq_hz_sigma": body["freq_hz_sigma"],
            "rabi_hz": body["rabi_hz"],
            "rabi_hz_sigma": body["rabi_hz_sigma"],
        }));
        fitted.push(fit.tone());
    }

    // Reconstruction on each transition.
    let band = band_of(&curves_a, pc.band_hz);
    let rec_a = reconstruct(&curves_a, &fitted, pc.refine.clone())?;
    let rep_a = write_reconstruction(art, "pipeline/estimate_a", &rec_a, Some(&spec_a), band)?;
    let rec_b = reconstruct(&curves_b, &fitted, pc.refine.clone())?;
    let rep_b = write_reconstruction(art, "pipeline/estimate_b", &rec_b, Some(&spec_b), band)?;

    // Laser / magnetic separation.
    let disc = discriminate_with(&rec_a.refined.psd, &pc.transition_a, &rec_b.refined.psd, &pc.transition_b)?;
    write_discrimination(art, "pipeline/discriminate", &disc)?;

    // Beat note from the recovered laser spectrum and from the planted one.
    let reference = match &pc.reference {
        Some(s) => s.load(&ctx.base)?,
        None => PsdModel::zero(),
    };
    let recovered_laser = disc.laser.clone().with_tones(fitted.clone())?;
    let beat = run_beatnote(recovered_laser, reference.clone(), &pc.beatnote)?;
    write_beatnote(art, "pipeline/beatnote/spectrum.csv", &beat, &pc.beatnote)?;
    let beat_planted = run_beatnote(laser.clone(), reference, &pc.beatnote)?;
    write_beatnote(art, "pipeline/beatnote/planted_spectrum.csv", &beat_planted, &pc.beatnote)?;

    let carrier = 2.0 * PI * pc.beatnote.carrier_hz;
    let summary = json!({
        "band_hz": [hz(band.0), hz(band.1)],
        "spectrum_a": rep_a["errors_vs_truth"],
        "spectrum_b": rep_b["errors_vs_truth"],
        "laser_band_error": band_relative_error(&disc.laser, &laser.smooth_part(), band.0, band.1),
        "magnetic_band_error": band_relative_error(&disc.magnetic, &magnetic, band.0, band.1),
        "tones": tone_reports,
        "beatnote": {
            "recovered": beat_summary(&beat, carrier, &fitted),
            "planted": beat_summary(&beat_planted, carrier, &planted_tones),
        },
    });
    art.json("pipeline/summary.json", &summary)?;
    Ok(())
}
