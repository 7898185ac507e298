//! Piecewise-linear power spectral density over angular frequency.
//!
//! Convention: `S(ω) = ∫ C(τ) e^{−iωτ} dτ` (two-sided transform of the
//! autocorrelation) stored for `ω ≥ 0` only. With this convention the
//! variance of the process is `(1/π) ∫₀^∞ S(ω) dω` and white noise of level
//! `S_w` dephases a driven qubit at rate `S_w / 2`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lln::LlnTone;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPsd")]
pub struct PsdModel {
    grid: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    interpolation: Interpolation,
    #[serde(default)]
    tones: Vec<LlnTone>,
}

#[derive(Deserialize)]
struct RawPsd {
    grid: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    interpolation: Interpolation,
    #[serde(default)]
    tones: Vec<LlnTone>,
}

impl TryFrom<RawPsd> for PsdModel {
    type Error = Error;

    fn try_from(raw: RawPsd) -> Result<Self> {
        let _ = raw.interpolation;
        PsdModel::new(raw.grid, raw.values)?.with_tones(raw.tones)
    }
}

impl PsdModel {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidPsd("empty grid".into()));
        }
        if grid.len() != values.len() {
            return Err(Error::InvalidPsd(format!(
                "grid has {} points but values has {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPsd("grid must be finite and non-negative".into()));
        }
        if grid.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidPsd("grid must be strictly ascending".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidPsd(format!("value {v} is negative or not finite")));
        }
        Ok(Self {
            grid,
            values,
            interpolation: Interpolation::Linear,
            tones: Vec::new(),
        })
    }

    /// `S ≡ 0`.
    pub fn zero() -> Self {
        Self::flat(0.0)
    }

    /// Flat at `level` for every frequency (single node, flat extrapolation).
    pub fn flat(level: f64) -> Self {
        Self::new(vec![0.0], vec![level]).expect("flat level must be finite and >= 0")
    }

    /// Sample `f` on `grid`.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: Vec<f64>, f: F) -> Result<Self> {
        let values = grid.iter().map(|&w| f(w)).collect();
        Self::new(grid, values)
    }

    pub fn with_tones(mut self, tones: Vec<LlnTone>) -> Result<Self> {
        for t in &tones {
            t.validate()?;
        }
        self.tones = tones;
        Ok(self)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tones(&self) -> &[LlnTone] {
        &self.tones
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// The same spectrum without its discrete tones.
    pub fn smooth_part(&self) -> Self {
        Self {
            tones: Vec::new(),
            ..self.clone()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0) && self.tones.iter().all(|t| t.omega_lln == 0.0)
    }

    /// Evaluate the smooth part: linear between nodes, flat outside.
    pub fn eval(&self, omega: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        if omega <= g[0] {
            return self.values[0];
        }
        if omega >= g[n - 1] {
            return self.values[n - 1];
        }
        let i = g.partition_point(|&x| x <= omega) - 1;
        let f = (omega - g[i]) / (g[i + 1] - g[i]);
        self.values[i] + f * (self.values[i + 1] - self.values[i])
    }

    /// Highest frequency carrying structure: last grid node or highest tone.
    pub fn max_omega(&self) -> f64 {
        self.tones
            .iter()
            .map(|t| t.omega0)
            .fold(*self.grid.last().unwrap(), f64::max)
    }

    /// `(1/π) ∫_lo^hi S(ω) dω` of the smooth part: the variance carried by
    /// the band.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut nodes = vec![lo];
        nodes.extend(self.grid.iter().copied().filter(|&w| w > lo && w < hi));
        nodes.push(hi);
        let integral: f64 = nodes
            .windows(2)
            .map(|p| 0.5 * (self.eval(p[0]) + self.eval(p[1])) * (p[1] - p[0]))
            .sum();
        integral / PI
    }

    /// Resample the smooth part onto another grid (tones carried over).
    pub fn resample(&self, grid: Vec<f64>) -> Result<Self> {
        let values = grid.iter().map(|&w| self.eval(w)).collect();
        Self::new(grid, values)?.with_tones(self.tones.clone())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::InvalidArgument(format!("scale factor {factor}")));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out.tones
            .iter_mut()
            .for_each(|t| t.omega_lln *= factor.sqrt());
        Ok(out)
    }

    /// Pointwise sum on the union of both grids; tones are concatenated.
    pub fn sum(&self, other: &PsdModel) -> Result<Self> {
        let grid = union_grid(&self.grid, &other.grid);
        let values = grid.iter().map(|&w| self.eval(w) + other.eval(w)).collect();
        let mut tones = self.tones.clone();
        tones.extend(other.tones.iter().cloned());
        Self::new(grid, values)?.with_tones(tones)
    }

    /// `omega_rad_s,S_rad2_per_hz` rows.
    pub fn to_csv_rows(&self) -> Vec<Vec<f64>> {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&w, &s)| vec![w, s])
            .collect()
    }

    pub fn from_csv_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut grid = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() < 2 {
                return Err(Error::Parse("PSD rows need omega and S columns".into()));
            }
            grid.push(r[0]);
            values.push(r[1]);
        }
        Self::new(grid, values)
    }
}

/// Sorted, de-duplicated union of two ascending grids.
pub fn union_grid(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    out.dedup();
    out
}

/// `n` evenly spaced points over `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}
