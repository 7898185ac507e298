//! Subcommand implementations. Each stage reads its inputs, runs the core
//! library and writes artifacts under the output directory.

use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use noisespec_core::beatnote::{simulate_beatnote, BeatnoteConfig, BeatnoteSpectrum};
use noisespec_core::discriminator::{discriminate_with, Discrimination, ZeemanTransition};
use noisespec_core::estimator::{band_relative_error, reconstruct, Reconstruction, RefineOptions};
use noisespec_core::io::CsvTable;
use noisespec_core::lln::{fit_lln, LlnFitOptions, LlnFitReport};
use noisespec_core::noise::{mix_seed, synthesize, WelchAccumulator};
use noisespec_core::qubit::{monte_carlo_decay, omega_scan, DriveConfig, McConfig};
use noisespec_core::{DecayCurve, LlnTone, PsdModel};

use crate::artifacts::Artifacts;
use crate::config::{
    resolve, BeatnoteCliConfig, DecayRuns, DiscriminateConfig, EstimateConfig, LlnFitConfig, PsdSource, RunConfig,
    ScanConfig, SimulateConfig, SpectrumWindow, SynthConfig, ToneSpec,
};
use crate::error::{CliError, CliResult};

const TAG_SYNTH: u64 = 0x5359_4E54;
const TAG_SIMULATE: u64 = 0x5349_4D55;
const TAG_SCAN: u64 = 0x5343_414E;

pub fn stage_seed(seed: u64, tag: u64) -> u64 {
    mix_seed(seed ^ tag)
}

pub struct Ctx {
    pub cfg: RunConfig,
    /// Directory relative input paths are resolved against.
    pub base: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
}

impl Ctx {
    fn block<'a, T>(&self, b: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        b.as_ref()
            .ok_or_else(|| CliError::Config(format!("config has no \"{name}\" block")))
    }

    fn psd_or_default(&self, own: &Option<PsdSource>) -> CliResult<PsdModel> {
        match own.as_ref().or(self.cfg.psd.as_ref()) {
            Some(src) => src.load(&self.base),
            None => Err(CliError::Config("no PSD given (set \"psd\" at top level or in the block)".into())),
        }
    }

    fn input_dir(&self, given: &Option<PathBuf>, default_stage: &str) -> PathBuf {
        match given {
            Some(p) => resolve(&self.base, p),
            None => self.out.join(default_stage),
        }
    }
}

fn hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

// ---------------------------------------------------------------- synth

pub fn synth(ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    let sc: &SynthConfig = ctx.block(&ctx.cfg.synth, "synth")?;
    let psd = ctx.psd_or_default(&sc.psd)?;
    if sc.n_traj == 0 {
        return Err(CliError::Config("synth.n_traj must be positive".into()));
    }
    if sc.segment_len > sc.n {
        return Err(CliError::Config("synth.segment_len must not exceed n".into()));
    }
    let base = stage_seed(ctx.seed, TAG_SYNTH);
    let mut welch = WelchAccumulator::new(sc.segment_len, sc.dt)?;
    let mut variances = Vec::with_capacity(sc.n_traj);
    let mut means = Vec::with_capacity(sc.n_traj);
    const CHUNK: usize = 64;
    for start in (0..sc.n_traj).step_by(CHUNK) {
        let end = (start + CHUNK).min(sc.n_traj);
        let trajs = (start..end)
            .into_par_iter()
            .map(|k| synthesize(&psd, sc.dt, sc.n, mix_seed(base.wrapping_add(k as u64))))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, tr) in (start..end).zip(&trajs) {
            welch.add(tr)?;
            let m = tr.mean();
            means.push(m);
            variances.push(tr.mean_square() - m * m);
            if k < sc.write_trajectories {
                let mut t = CsvTable::new(&["t_s", "value"]).with_meta(json!({
                    "dt": sc.dt,
                    "seed": tr.seed(),
                }));
                for (i, v) in tr.samples().iter().enumerate() {
                    t.push(vec![i as f64 * sc.dt, *v]);
                }
                art.table(&format!("synth/trajectory_{k:03}.csv"), t)?;
            }
        }
    }
    let welch_psd = welch.finish()?;
    art.psd("synth/welch_psd.csv", &welch_psd, json!({ "n_traj": sc.n_traj, "segment_len": sc.segment_len }))?;
    let nyquist = PI / sc.dt;
    let tone_var: f64 = psd
        .tones()
        .iter()
        .filter(|t| t.omega0 < nyquist)
        .map(|t| 0.5 * t.amplitude().powi(2))
        .sum();
    let n = variances.len() as f64;
    art.json(
        "synth/summary.json",
        &json!({
            "dt": sc.dt,
            "n": sc.n,
            "n_traj": sc.n_traj,
            "variance_expected": psd.band_power(0.0, nyquist) + tone_var,
            "variance_mean": variances.iter().sum::<f64>() / n,
            "mean_of_means": means.iter().sum::<f64>() / n,
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------- simulate

/// Decay curves at every drive value; curve `i` uses `mix_seed(seed + i)`.
pub fn run_decays(
    psd: &PsdModel,
    drive_noise: Option<&PsdModel>,
    runs: &DecayRuns,
    omegas: &[f64],
    seed: u64,
) -> CliResult<Vec<DecayCurve>> {
    let times = runs.times.to_vec();
    omegas
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let mut drive = DriveConfig::new(w, times.clone()).with_stark_shift(2.0 * PI * runs.stark_shift_hz);
            drive.drive_noise = drive_noise.cloned();
            let mut mc = McConfig::new(runs.n_traj, mix_seed(seed.wrapping_add(i as u64)))
                .with_frame(runs.frame)
                .with_points_per_period(runs.points_per_period);
            mc.shots = runs.shots;
            Ok(monte_carlo_decay(psd, &drive, &mc)?)
        })
        .collect()
}

pub fn write_curves(art: &mut Artifacts, dir: &str, curves: &[DecayCurve], extra: &Value) -> CliResult<()> {
    let mut index = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let name = format!("curve_{i:03}.csv");
        art.table(&format!("{dir}/{name}"), c.to_table(Some(extra)))?;
        index.push(json!({ "file": name, "omega": c.omega, "omega_hz": hz(c.omega), "seed": c.seed }));
    }
    art.json(&format!("{dir}/index.json"), &json!({ "curves": index, "meta": extra }))?;
    Ok(())
}

pub fn read_curves(dir: &Path) -> CliResult<Vec<DecayCurve>> {
    if !dir.is_dir() {
        return Err(CliError::MissingInput(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("curve_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("no curve_*.csv files in {}", dir.display())));
    }
    files
        .iter()
        .map(|f| Ok(DecayCurve::from_table(&CsvTable::read(f)?)?))
        .collect()
}

pub fn run_scan(psd: &PsdModel, scan: &ScanConfig, default_n_traj: usize, seed: u64, stark_hz: f64) -> CliResult<CsvTable> {
    let omegas = scan.omegas_hz.to_angular();
    let mut mc = McConfig::new(scan.n_traj.unwrap_or(default_n_traj), seed);
    mc.shots = scan.shots;
    let pts = omega_scan(psd, &omegas, scan.t, 2.0 * PI * stark_hz, &mc)?;
    let mut t = CsvTable::new(&["omega_rad_s", "p_s", "stderr"]).with_meta(json!({ "t": scan.t, "seed": seed }));
    for p in pts {
        t.push(vec![p.omega, p.p_s, p.stderr]);
    }
    Ok(t)
}

pub fn simulate(ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    let sc: &SimulateConfig = ctx.block(&ctx.cfg.simulate, "simulate")?;
    let psd = ctx.psd_or_default(&sc.psd)?;
    let drive_noise = sc.drive_noise.as_ref().map(|s| s.load(&ctx.base)).transpose()?;
    if sc.decay.is_none() && sc.scan.is_none() {
        return Err(CliError::Config("simulate needs a \"decay\" or \"scan\" block".into()));
    }
    let seed = stage_seed(ctx.seed, TAG_SIMULATE);
    if let Some(runs) = &sc.decay {
        let curves = run_decays(&psd, drive_noise.as_ref(), runs, &runs.omegas_hz.to_angular(), seed)?;
        write_curves(art, "simulate", &curves, &json!({ "frame": runs.frame, "shots": runs.shots }))?;
    }
    if let Some(scan) = &sc.scan {
        let n_traj = sc.decay.as_ref().map_or(200, |d| d.n_traj);
        let stark = sc.decay.as_ref().map_or(0.0, |d| d.stark_shift_hz);
        let t = run_scan(&psd, scan, n_traj, stage_seed(ctx.seed, TAG_SCAN), stark)?;
        art.table("simulate/scan.csv", t)?;
    }
    Ok(())
}

// ------------------------------------------------------------- estimate

pub fn band_of(curves: &[DecayCurve], band_hz: Option<[f64; 2]>) -> (f64, f64) {
    match band_hz {
        Some([lo, hi]) => (2.0 * PI * lo, 2.0 * PI * hi),
        None => curves.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(c.omega), hi.max(c.omega))),
    }
}

pub fn write_reconstruction(
    art: &mut Artifacts,
    dir: &str,
    rec: &Reconstruction,
    truth: Option<&PsdModel>,
    band: (f64, f64),
) -> CliResult<Value> {
    let mut t = CsvTable::new(&[
        "omega_rad_s",
        "S_rad2_per_hz",
        "S_sigma",
        "delta_a_rad_s",
        "delta_a_sigma",
        "delta_a_resolved",
        "chi2_red",
    ]);
    for r in &rec.rectangular {
        t.push(vec![
            r.omega,
            r.s,
            r.s_sigma,
            r.delta_a,
            r.delta_a_sigma,
            if r.delta_a_resolved { 1.0 } else { 0.0 },
            r.chi2_red,
        ]);
    }
    art.table(&format!("{dir}/rectangular.csv"), t)?;
    art.psd(&format!("{dir}/initial_psd.csv"), &rec.initial, json!({ "stage": "rectangular" }))?;
    art.psd(&format!("{dir}/refined_psd.csv"), &rec.refined.psd, json!({ "stage": "refined" }))?;
    let mut log = CsvTable::new(&["iter", "J", "step"]);
    for r in &rec.refined.log {
        log.push(vec![r.iter as f64, r.j, r.step]);
    }
    art.table(&format!("{dir}/iterations.csv"), log)?;
    let errors = truth.map(|tr| {
        let smooth = tr.smooth_part();
        json!({
            "band_rad_s": [band.0, band.1],
            "initial_band_error": band_relative_error(&rec.initial, &smooth, band.0, band.1),
            "refined_band_error": band_relative_error(&rec.refined.psd, &smooth, band.0, band.1),
        })
    });
    let report = json!({
        "status": rec.refined.status,
        "iterations": rec.refined.log.len().saturating_sub(1),
        "j_initial": rec.refined.log.first().map(|r| r.j),
        "j_final": rec.refined.log.last().map(|r| r.j),
        "curves_used": rec.rectangular.len(),
        "rejected": rec.rejected,
        "errors_vs_truth": errors,
    });
    art.json(&format!("{dir}/report.json"), &report)?;
    Ok(report)
}

pub fn read_tone_report(path: &Path) -> CliResult<LlnTone> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: Value = serde_json::from_str(&text)?;
    let fit: LlnFitReport = serde_json::from_value(
        v.get("fit")
            .cloned()
            .ok_or_else(|| CliError::Config(format!("{} has no \"fit\" object", path.display())))?,
    )?;
    Ok(fit.tone())
}

pub fn estimate(ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    let default = EstimateConfig {
        curves: None,
        tone_report: None,
        refine: RefineOptions::default(),
        truth: None,
        band_hz: None,
    };
    let ec = ctx.cfg.estimate.as_ref().unwrap_or(&default);
    let curves = read_curves(&ctx.input_dir(&ec.curves, "simulate"))?;
    let tones = match &ec.tone_report {
        Some(p) => vec![read_tone_report(&resolve(&ctx.base, p))?],
        None => Vec::new(),
    };
    let truth = ec.truth.as_ref().map(|s| s.load(&ctx.base)).transpose()?;
    let rec = reconstruct(&curves, &tones, ec.refine.clone())?;
    write_reconstruction(art, "estimate", &rec, truth.as_ref(), band_of(&curves, ec.band_hz))?;
    Ok(())
}

// -------------------------------------------------------------- lln-fit

pub fn write_tone_report(art: &mut Artifacts, rel: &str, fit: &LlnFitReport, planted: Option<&LlnTone>) -> CliResult<Value> {
    let body = json!({
        "freq_hz": hz(fit.omega0),
        "freq_hz_sigma": hz(fit.omega0_sigma),
        "rabi_hz": hz(fit.omega_lln),
        "rabi_hz_sigma": hz(fit.omega_lln_sigma),
        "planted": planted.map(|t| json!({ "freq_hz": hz(t.omega0), "rabi_hz": hz(t.omega_lln) })),
        "fit": fit,
    });
    art.json(rel, &body)?;
    Ok(body)
}

pub fn lln_options(bloch_siegert: bool, free_gamma_v: bool, chi2_gate: f64, spectators: Vec<LlnTone>) -> LlnFitOptions {
    LlnFitOptions {
        free_gamma_v,
        chi2_gate,
        bloch_siegert,
        spectators,
        ..LlnFitOptions::default()
    }
}

pub fn lln_fit(ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    let default = LlnFitConfig {
        curves: None,
        free_gamma_v: false,
        chi2_gate: 4.0,
        bloch_siegert: true,
        spectators: Vec::new(),
    };
    let lc = ctx.cfg.lln_fit.as_ref().unwrap_or(&default);
    let curves = read_curves(&ctx.input_dir(&lc.curves, "simulate"))?;
    let spectators = lc.spectators.iter().map(ToneSpec::to_tone).collect();
    let fit = fit_lln(&curves, &lln_options(lc.bloch_siegert, lc.free_gamma_v, lc.chi2_gate, spectators))?;
    write_tone_report(art, "lln/report.json", &fit, None)?;
    Ok(())
}

// --------------------------------------------------------- discriminate

pub fn write_discrimination(art: &mut Artifacts, dir: &str, d: &Discrimination) -> CliResult<()> {
    let mut l = CsvTable::new(&["omega_rad_s", "S_rad2_per_hz", "clamped"]);
    let mut m = CsvTable::new(&["omega_rad_s", "S_T2_per_hz", "clamped"]);
    for i in 0..d.grid.len() {
        l.push(vec![d.grid[i], d.laser.values()[i], d.laser_clamped[i] as u8 as f64]);
        m.push(vec![d.grid[i], d.magnetic.values()[i], d.magnetic_clamped[i] as u8 as f64]);
    }
    art.table(&format!("{dir}/laser_psd.csv"), l.with_meta(json!({ "quantity": "laser frequency noise" })))?;
    art.table(&format!("{dir}/magnetic_psd.csv"), m.with_meta(json!({ "quantity": "magnetic field noise" })))?;
    Ok(())
}

pub fn discriminate(ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    let dc: &DiscriminateConfig = ctx.block(&ctx.cfg.discriminate, "discriminate")?;
    dc.transition_a.validate()?;
    dc.transition_b.validate()?;
    let a = crate::config::read_psd(&resolve(&ctx.base, &dc.spectrum_a))?;
    let b = crate::config::read_psd(&resolve(&ctx.base, &dc.spectrum_b))?;
    let d = discriminate_with(&a, &dc.transition_a, &b, &dc.transition_b)?;
    write_discrimination(art, "discriminate", &d)?;
    Ok(())
}

// ------------------------------------------------------------- beatnote

pub fn run_beatnote(s1: PsdModel, s2: PsdModel, w: &SpectrumWindow) -> CliResult<BeatnoteSpectrum> {
    let cfg = BeatnoteConfig {
        s1,
        s2,
        omega0: 2.0 * PI * w.carrier_hz,
        amp_product: w.amp_product,
        tau_max: w.tau_max,
        grid: w.grid()?,
        n_tau: w.n_tau,
    };
    Ok(simulate_beatnote(&cfg)?)
}

pub fn write_beatnote(art: &mut Artifacts, rel: &str, s: &BeatnoteSpectrum, w: &SpectrumWindow) -> CliResult<()> {
    let db = s.db_normalized();
    let mut t = CsvTable::new(&["omega_rad_s", "S_I", "dB"]).with_meta(json!({
        "carrier_hz": w.carrier_hz,
        "tau_max": w.tau_max,
        "n_tau": s.n_tau,
    }));
    for i in 0..s.omega.len() {
        // −∞ dB has no CSV form; floor at −400 dB.
        t.push(vec![s.omega[i], s.s_i[i], db[i].max(-400.0)]);
    }
    art.table(rel, t)?;
    Ok(())
}

pub fn beatnote(ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    let bc: &BeatnoteCliConfig = ctx.block(&ctx.cfg.beatnote, "beatnote")?;
    let s1 = bc.s1.load(&ctx.base)?;
    let s2 = match &bc.s2 {
        Some(s) => s.load(&ctx.base)?,
        None => PsdModel::zero(),
    };
    let spec = run_beatnote(s1, s2, &bc.window)?;
    write_beatnote(art, "beatnote/spectrum.csv", &spec, &bc.window)?;
    Ok(())
}

/// Transition pair check shared with the pipeline.
pub fn check_transitions(a: &ZeemanTransition, b: &ZeemanTransition) -> CliResult<()> {
    a.validate()?;
    b.validate()?;
    Ok(())
}
