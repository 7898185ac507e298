//! Run configuration. Frequencies given in Hz are converted to angular
//! frequency on load; times are in seconds; PSD values in rad²/Hz unless a
//! block says otherwise.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use noisespec_core::discriminator::ZeemanTransition;
use noisespec_core::estimator::RefineOptions;
use noisespec_core::io::CsvTable;
use noisespec_core::psd::{linspace, union_grid};
use noisespec_core::qubit::{FrameKind, DEFAULT_POINTS_PER_PERIOD};
use noisespec_core::{LlnTone, PsdModel};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    /// Default PSD for `synth` and `simulate`.
    #[serde(default)]
    pub psd: Option<PsdSource>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub estimate: Option<EstimateConfig>,
    #[serde(default)]
    pub lln_fit: Option<LlnFitConfig>,
    #[serde(default)]
    pub discriminate: Option<DiscriminateConfig>,
    #[serde(default)]
    pub beatnote: Option<BeatnoteCliConfig>,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
}

/// Explicit list or `n` evenly spaced values over `[start, stop]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range { start: f64, stop: f64, n: usize },
}

impl Values {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::List(v) => v.clone(),
            Values::Range { start, stop, n } => linspace(*start, *stop, *n),
        }
    }

    pub fn to_angular(&self) -> Vec<f64> {
        self.to_vec().into_iter().map(|f| 2.0 * PI * f).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSpec {
    pub freq_hz: f64,
    pub rabi_hz: f64,
    #[serde(default)]
    pub phase: f64,
}

impl ToneSpec {
    pub fn to_tone(&self) -> LlnTone {
        LlnTone::new(2.0 * PI * self.freq_hz, 2.0 * PI * self.rabi_hz, self.phase)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzianSpec {
    pub center_hz: f64,
    pub hwhm_hz: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowFrequencySpec {
    pub height: f64,
    pub corner_hz: f64,
}

/// Analytic PSD: `white + Σ Lorentzians + height/(1 + (f/corner)²)`,
/// sampled on a linear grid refined around each feature.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub max_hz: f64,
    pub step_hz: f64,
    #[serde(default)]
    pub white: f64,
    #[serde(default)]
    pub lorentzians: Vec<LorentzianSpec>,
    #[serde(default)]
    pub low_frequency: Option<LowFrequencySpec>,
}

impl ShapeSpec {
    pub fn value_at_hz(&self, f: f64) -> f64 {
        let mut v = self.white;
        for l in &self.lorentzians {
            v += l.height / (1.0 + ((f - l.center_hz) / l.hwhm_hz).powi(2));
        }
        if let Some(lf) = &self.low_frequency {
            v += lf.height / (1.0 + (f / lf.corner_hz).powi(2));
        }
        v
    }

    fn grid_hz(&self) -> CliResult<Vec<f64>> {
        if !(self.max_hz > 0.0 && self.step_hz > 0.0 && self.step_hz <= self.max_hz) {
            return Err(CliError::Config(format!(
                "shape needs 0 < step_hz <= max_hz, got step {} max {}",
                self.step_hz, self.max_hz
            )));
        }
        for l in &self.lorentzians {
            if !(l.hwhm_hz > 0.0) {
                return Err(CliError::Config(format!("Lorentzian hwhm_hz must be positive, got {}", l.hwhm_hz)));
            }
        }
        if let Some(lf) = &self.low_frequency {
            if !(lf.corner_hz > 0.0) {
                return Err(CliError::Config(format!("corner_hz must be positive, got {}", lf.corner_hz)));
            }
        }
        let n = (self.max_hz / self.step_hz).round() as usize + 1;
        let mut grid = linspace(0.0, self.max_hz, n);
        for l in &self.lorentzians {
            let fine = linspace(l.center_hz - 5.0 * l.hwhm_hz, l.center_hz + 5.0 * l.hwhm_hz, 41);
            grid = union_grid(&grid, &fine);
        }
        if let Some(lf) = &self.low_frequency {
            let (lo, hi) = ((lf.corner_hz / 10.0).ln(), (lf.corner_hz * 10.0).ln());
            let log: Vec<f64> = linspace(lo, hi, 33).into_iter().map(f64::exp).collect();
            grid = union_grid(&grid, &log);
        }
        let mut out: Vec<f64> = Vec::with_capacity(grid.len());
        for f in grid.into_iter().filter(|&f| (0.0..=self.max_hz).contains(&f)) {
            // Drop near-duplicates from overlapping refinements.
            if out.last().is_none_or(|&prev| f - prev > 1e-6 * self.step_hz) {
                out.push(f);
            }
        }
        Ok(out)
    }

    pub fn build(&self) -> CliResult<PsdModel> {
        let hz = self.grid_hz()?;
        let grid: Vec<f64> = hz.iter().map(|f| 2.0 * PI * f).collect();
        let values = hz.iter().map(|&f| self.value_at_hz(f)).collect();
        Ok(PsdModel::new(grid, values)?)
    }
}

/// One of `file` (a PSD CSV written by this tool), `inline` (grid/values in
/// rad/s) or `shape`; none of them means a zero smooth part. `scale`
/// multiplies the smooth part, `tones` are added afterwards.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSource {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub inline: Option<PsdModel>,
    #[serde(default)]
    pub shape: Option<ShapeSpec>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub tones: Vec<ToneSpec>,
}

impl PsdSource {
    pub fn load(&self, base: &Path) -> CliResult<PsdModel> {
        let given = [self.file.is_some(), self.inline.is_some(), self.shape.is_some()];
        if given.iter().filter(|&&b| b).count() > 1 {
            return Err(CliError::Config("a PSD source takes only one of file, inline, shape".into()));
        }
        let mut psd = if let Some(f) = &self.file {
            read_psd(&resolve(base, f))?
        } else if let Some(m) = &self.inline {
            m.clone()
        } else if let Some(s) = &self.shape {
            s.build()?
        } else {
            PsdModel::zero()
        };
        if let Some(k) = self.scale {
            psd = psd.scaled(k)?;
        }
        let mut tones = psd.tones().to_vec();
        tones.extend(self.tones.iter().map(ToneSpec::to_tone));
        Ok(psd.smooth_part().with_tones(tones)?)
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_psd(path: &Path) -> CliResult<PsdModel> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let table = CsvTable::read(path)?;
    let psd = PsdModel::from_csv_rows(&table.rows)?;
    let tones: Vec<LlnTone> = match table.meta.as_ref().and_then(|m| m.get("tones")) {
        Some(v) => serde_json::from_value(v.clone())?,
        None => Vec::new(),
    };
    Ok(psd.with_tones(tones)?)
}

fn default_ppp() -> f64 {
    DEFAULT_POINTS_PER_PERIOD
}

fn default_true() -> bool {
    true
}

fn default_chi2_gate() -> f64 {
    4.0
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub psd: Option<PsdSource>,
    pub dt: f64,
    /// Samples per trajectory (power of two).
    pub n: usize,
    pub n_traj: usize,
    /// Welch segment length (power of two, ≤ n).
    pub segment_len: usize,
    /// How many trajectories to write out in full.
    #[serde(default)]
    pub write_trajectories: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub omegas_hz: Values,
    /// Snapshot time (s).
    pub t: f64,
    #[serde(default)]
    pub n_traj: Option<usize>,
    #[serde(default)]
    pub shots: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayRuns {
    pub omegas_hz: Values,
    pub times: Values,
    pub n_traj: usize,
    #[serde(default)]
    pub shots: Option<u32>,
    #[serde(default)]
    pub stark_shift_hz: f64,
    #[serde(default)]
    pub frame: FrameKind,
    #[serde(default = "default_ppp")]
    pub points_per_period: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub psd: Option<PsdSource>,
    #[serde(default)]
    pub drive_noise: Option<PsdSource>,
    #[serde(default)]
    pub decay: Option<DecayRuns>,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Directory of `curve_*.csv`; defaults to `<out>/simulate`.
    #[serde(default)]
    pub curves: Option<PathBuf>,
    /// Tone report from `lln-fit`; its tone is masked and modelled.
    #[serde(default)]
    pub tone_report: Option<PathBuf>,
    #[serde(default)]
    pub refine: RefineOptions,
    /// Planted PSD to score the reconstruction against.
    #[serde(default)]
    pub truth: Option<PsdSource>,
    /// Band for the error summary; defaults to the span of drive values.
    #[serde(default)]
    pub band_hz: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnFitConfig {
    /// Directory of `curve_*.csv`; defaults to `<out>/simulate`.
    #[serde(default)]
    pub curves: Option<PathBuf>,
    #[serde(default)]
    pub free_gamma_v: bool,
    #[serde(default = "default_chi2_gate")]
    pub chi2_gate: f64,
    #[serde(default = "default_true")]
    pub bloch_siegert: bool,
    /// Other known tones whose off-resonant shift is corrected for.
    #[serde(default)]
    pub spectators: Vec<ToneSpec>,
}

fn default_tr_a() -> ZeemanTransition {
    ZeemanTransition::s12()
}

fn default_tr_b() -> ZeemanTransition {
    ZeemanTransition::s13()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminateConfig {
    pub spectrum_a: PathBuf,
    pub spectrum_b: PathBuf,
    #[serde(default = "default_tr_a")]
    pub transition_a: ZeemanTransition,
    #[serde(default = "default_tr_b")]
    pub transition_b: ZeemanTransition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumWindow {
    pub carrier_hz: f64,
    pub span_hz: f64,
    pub n_points: usize,
    pub tau_max: f64,
    #[serde(default = "default_one")]
    pub amp_product: f64,
    #[serde(default)]
    pub n_tau: Option<usize>,
}

impl SpectrumWindow {
    pub fn grid(&self) -> CliResult<Vec<f64>> {
        if self.n_points < 2 || !(self.span_hz > 0.0) {
            return Err(CliError::Config("beat-note window needs span_hz > 0 and n_points >= 2".into()));
        }
        Ok(linspace(self.carrier_hz - self.span_hz, self.carrier_hz + self.span_hz, self.n_points)
            .into_iter()
            .map(|f| 2.0 * PI * f)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatnoteCliConfig {
    pub s1: PsdSource,
    #[serde(default)]
    pub s2: Option<PsdSource>,
    pub window: SpectrumWindow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneScan {
    /// Index into the planted laser tones.
    #[serde(default)]
    pub tone: usize,
    /// Drive values as offsets from the tone frequency.
    pub offsets_hz: Values,
    pub times: Values,
    pub n_traj: usize,
    #[serde(default)]
    pub shots: Option<u32>,
    #[serde(default = "default_ppp")]
    pub points_per_period: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Laser frequency noise, tones included.
    pub laser: PsdSource,
    /// Magnetic-field noise in T²/Hz (use `scale` for convenient units).
    #[serde(default)]
    pub magnetic: PsdSource,
    #[serde(default = "default_tr_a")]
    pub transition_a: ZeemanTransition,
    #[serde(default = "default_tr_b")]
    pub transition_b: ZeemanTransition,
    pub decay: DecayRuns,
    #[serde(default)]
    pub omega_scan: Option<ScanConfig>,
    #[serde(default)]
    pub tone_scans: Vec<ToneScan>,
    #[serde(default = "default_true")]
    pub bloch_siegert: bool,
    #[serde(default)]
    pub refine: RefineOptions,
    #[serde(default)]
    pub band_hz: Option<[f64; 2]>,
    pub beatnote: SpectrumWindow,
    /// Reference laser for the beat note; zero when absent.
    #[serde(default)]
    pub reference: Option<PsdSource>,
}
